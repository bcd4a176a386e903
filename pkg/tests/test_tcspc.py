import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nvhom.errors import DomainError
from nvhom.mc import ClickStream, DetectorModel, EmissionDynamics, hom_batches
from nvhom.model import PairConfig, g2_cross
from nvhom.tcspc import (CorrelatorConfig, _count_pairs, correlate, correlate_batches, merge,
                         normalize, rebin)

from conftest import GAMMA, fraction_within_3sigma, make_emitter


def stream(c_ps, d_ps, duration=1e-6):
    c_ps, d_ps = np.asarray(c_ps, np.int64), np.asarray(d_ps, np.int64)
    t = np.concatenate([c_ps, d_ps])
    det = np.concatenate([np.zeros(c_ps.size), np.ones(d_ps.size)])
    order = np.argsort(t, kind="stable")
    return ClickStream(det[order], t[order], np.zeros(t.size), duration)


def poisson_stream(rate_c, rate_d, duration, seed):
    rng = np.random.default_rng(seed)
    end = int(duration / 1e-12)
    c = np.sort(rng.integers(0, end, rng.poisson(rate_c * duration)))
    d = np.sort(rng.integers(0, end, rng.poisson(rate_d * duration)))
    return stream(c, d, duration)


def test_config_defaults_and_validation():
    cfg = CorrelatorConfig()
    assert cfg.bin_ps == 64 and cfg.n_bins == 3125 and cfg.n_bins % 2 == 1
    for kw in (dict(bin_width=0.0), dict(bin_width=1e-13), dict(window=32e-12),
               dict(normalization="peak")):
        with pytest.raises(DomainError):
            CorrelatorConfig(**kw)


def test_hand_countable():
    h = correlate(stream([0], [5000]), CorrelatorConfig(window=50e-9))
    assert h.counts.sum() == 1
    k = np.flatnonzero(h.counts)[0]
    assert abs(h.tau[k] - 5e-9) <= h.bin_width / 2
    assert h.tau[h.counts.size // 2] == 0.0


def test_bin_edges_are_half_open():
    cfg = CorrelatorConfig(bin_width=64e-12, window=1e-9)
    mid = cfg.n_half
    for dt, k in ((31, 0), (32, 1), (-32, 0), (-33, -1), (95, 1), (96, 2)):
        counts = _count_pairs(np.array([1000]), np.array([1000 + dt]), 64, cfg.n_half)
        assert counts[mid + k] == 1, (dt, k)


def _reference_counts(tc, td, b, n_half):
    out = np.zeros(2 * n_half + 1, dtype=np.int64)
    for x in tc:
        for y in td:
            k = math.floor((y - x) / b + 0.5)
            if abs(k) <= n_half:
                out[k + n_half] += 1
    return out


@given(st.lists(st.integers(0, 20_000), max_size=40), st.lists(st.integers(0, 20_000), max_size=40),
       st.integers(1, 300), st.integers(1, 40))
def test_count_pairs_matches_brute_force(tc, td, b, n_half):
    tc, td = np.sort(np.array(tc, np.int64)), np.sort(np.array(td, np.int64))
    assert np.array_equal(_count_pairs(tc, td, b, n_half), _reference_counts(tc, td, b, n_half))


def test_empty_stream():
    h = correlate(stream([], [], 1.0))
    assert h.counts.sum() == 0
    assert np.all(h.g2 == 0) and np.all(np.isnan(h.g2_err))


def test_zero_rates_with_counts_inconsistent():
    h = correlate(stream([0], [100]), normalized=False)
    h.rate_C = 0.0
    with pytest.raises(DomainError):
        normalize(h)


def test_poisson_flat_expectation():
    h = correlate(poisson_stream(1100, 1100, 600.0, 1))
    per_bin = 1100 * 1100 * 600 * 64e-12
    assert per_bin == pytest.approx(0.0465, abs=1e-4)
    n = h.counts.size
    expected = h.rate_C * h.rate_D * h.duration * h.bin_width * n
    assert abs(h.counts.sum() - expected) <= 3 * math.sqrt(expected)
    assert abs(h.counts.sum() / n - per_bin) <= 3 * math.sqrt(per_bin / n) + 0.002


def test_normalizations_agree_on_uncorrelated_data():
    h = correlate(poisson_stream(1e5, 1e5, 60.0, 2), normalized=False)
    a = normalize(h, "rate-product")
    b = normalize(h, "tail-average")
    assert a.g2.mean() == pytest.approx(1.0, abs=0.01)
    assert b.g2.mean() == pytest.approx(a.g2.mean(), rel=0.02)
    # flat within 3 sigma
    assert np.mean(np.abs(a.g2 - 1) <= 3 * a.g2_err) > 0.99


def test_rebin_identity_conservation_and_errors():
    h = correlate(poisson_stream(1e5, 1e5, 10.0, 3))
    same = rebin(h, 1)
    assert np.array_equal(same.counts, h.counts) and np.allclose(same.g2, h.g2)
    for f in (5, 25, 125, 625, 3125):
        r = rebin(h, f)
        assert r.counts.sum() == h.counts.sum()
        assert r.tau[r.counts.size // 2] == 0.0
        assert r.counts.size % 2 == 1
    for bad in (0, -5, 2, 16, 2.5):
        with pytest.raises(DomainError):
            rebin(h, bad)


def test_rebin_reduces_error_by_sqrt_factor():
    h = correlate(poisson_stream(1e5, 1e5, 10.0, 4))
    r = rebin(h, 25)
    assert r.g2.mean() == pytest.approx(h.g2.mean(), rel=1e-12)
    ratio = np.nanmean(h.g2_err) / np.nanmean(r.g2_err)
    assert ratio == pytest.approx(5.0, rel=0.05)


@given(arrays(np.int64, 3125, elements=st.integers(0, 50)), st.sampled_from([1, 5, 25, 125, 625]))
def test_rebin_conserves_counts_property(counts, f):
    h = correlate(stream([], [], 1.0), normalized=False)
    h.counts = counts
    assert rebin(h, f).counts.sum() == counts.sum()


def test_merge_is_order_independent_and_checks_binning():
    hs = [correlate(poisson_stream(2e4, 3e4, 1.0, s), normalized=False) for s in range(4)]
    a = merge(hs)
    b = merge([hs[2], hs[0], hs[3], hs[1]])
    c = merge([merge(hs[:2]), merge(hs[2:])])
    assert np.array_equal(a.counts, b.counts) and np.array_equal(a.counts, c.counts)
    assert a.duration == 4.0
    assert a.rate_C == pytest.approx(b.rate_C, rel=1e-15)
    other = correlate(poisson_stream(1, 1, 1.0, 9), CorrelatorConfig(bin_width=128e-12), normalized=False)
    with pytest.raises(DomainError):
        merge([hs[0], other])
    with pytest.raises(DomainError):
        merge([])


def test_export(tmp_path):
    h = correlate(stream([0, 10_000], [5000, 12_000], 1.0), CorrelatorConfig(window=20e-9))
    h.to_csv(tmp_path / "h.csv")
    h.write_header(tmp_path / "h.json")
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert lines[0] == "tau_ps,counts,g2,g2_err"
    assert len(lines) == h.counts.size + 1
    assert lines[1 + h.counts.size // 2].startswith("0,")
    hdr = json.loads((tmp_path / "h.json").read_text())
    assert hdr["bin_width_ps"] == 64 and hdr["total_counts"] == 4


@pytest.fixture(scope="module")
def distinguishable_hist():
    e1 = make_emitter(93e6, 88e6, 6.0525e-9, 1.0, 150e-9)
    e2 = make_emitter(0.0, 106e6, 7.7871e-9, 1.0, 150e-9)
    pair = PairConfig(e1, e2, 0.0)
    d1 = EmissionDynamics.from_autocorr(e1.autocorr, GAMMA).with_collected_rate(2e4)
    d2 = EmissionDynamics.from_autocorr(e2.autocorr, GAMMA).with_collected_rate(2e4)
    det = DetectorModel(jitter_sigma=50e-12)
    h = correlate_batches(hom_batches(pair, d1, d2, det, 200.0, 17, batch_duration=50.0))
    return pair, h


def test_round_trip_distinguishable(distinguishable_hist):
    pair, h = distinguishable_hist
    assert fraction_within_3sigma(h, lambda t: g2_cross(t, pair)) >= 0.95


def test_symmetry_statistic(distinguishable_hist):
    _, h = distinguishable_hist
    c = h.counts
    stat = np.abs(c - c[::-1]).sum() / c.sum()
    # same statistic for Poisson draws from the symmetrized histogram
    rng = np.random.default_rng(0)
    mu = 0.5 * (c + c[::-1])
    null = []
    for _ in range(200):
        x = rng.poisson(mu)
        y = rng.poisson(mu)
        null.append(np.abs(x - y).sum() / x.sum())
    # counts(tau) and counts(-tau) are independent, but the statistic pairs each bin twice
    null = np.array(null)
    assert stat <= null.mean() + 4 * null.std()
