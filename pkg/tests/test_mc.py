import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from nvhom.errors import ConfigError, DomainError, ValidityError
from nvhom.mc import (PROVENANCE, ClickStream, DetectorModel, EmissionDynamics, _dead_time_filter,
                      batch_seed, hbt_batches, hom_batches, simulate_emitter_stream, simulate_hbt,
                      simulate_hom, simulate_ple)
from nvhom.model import AutocorrParams, PairConfig, g2_auto, g2_cross
from nvhom.tcspc import CorrelatorConfig, correlate, correlate_batches, merge, normalize

from conftest import GAMMA, fraction_within_3sigma, make_emitter

QUIET = DetectorModel(efficiency=1.0, jitter_sigma=0.0)


def dyn_for(rate, p=AutocorrParams(1.0, 6.0e-9, 150e-9)):
    return EmissionDynamics.from_autocorr(p, GAMMA).with_collected_rate(rate)


# ------------------------------------------------------------------ dynamics


def test_dynamics_validation():
    with pytest.raises(ConfigError):
        EmissionDynamics(1e8, 0.0)
    with pytest.raises(ConfigError):
        EmissionDynamics(1e8, GAMMA, shelf_prob=1.0)
    with pytest.raises(ConfigError):
        EmissionDynamics(1e8, GAMMA, shelf_lifetime=0.0)
    with pytest.raises(ConfigError):
        EmissionDynamics(-1.0, GAMMA)


def test_pump_off_gives_empty_stream():
    dyn = EmissionDynamics(0.0, GAMMA)
    assert dyn.emission_rate() == 0.0
    ph = simulate_emitter_stream(make_emitter(), dyn, 1.0, seed=1)
    assert len(ph) == 0


def test_two_state_interval_distribution():
    """No shelf, eta = 1: intervals are Exp(pump) + Exp(gamma)."""
    r, g = 2e9, GAMMA
    dyn = EmissionDynamics(r, g)
    p = dyn.autocorr()
    assert p.a == pytest.approx(0.0, abs=1e-12)
    assert p.tau1 == pytest.approx(1 / (r + g), rel=1e-12)
    t = simulate_emitter_stream(make_emitter(), dyn, 2e-3, seed=5).emit_time
    iv = np.diff(t)

    def cdf(x):
        x = np.asarray(x)
        return 1 - (r * np.exp(-g * x) - g * np.exp(-r * x)) / (r - g)

    assert stats.kstest(iv, cdf).pvalue > 1e-3
    # pump >> gamma: close to a plain exponential of rate gamma
    assert iv.mean() == pytest.approx(1 / g, rel=0.05)


@pytest.mark.parametrize("p", [AutocorrParams(1.0, 6.0525e-9, 150e-9), AutocorrParams(1.0, 7.7871e-9, 150e-9),
                               AutocorrParams(0.5, 8e-9, 200e-9), AutocorrParams(0.0, 5e-9, 100e-9)])
def test_from_autocorr_round_trip(p):
    dyn = EmissionDynamics.from_autocorr(p, GAMMA)
    q = dyn.autocorr()
    assert q.a == pytest.approx(p.a, abs=1e-9)
    assert q.tau1 == pytest.approx(p.tau1, rel=1e-9)
    assert q.tau2 == pytest.approx(p.tau2, rel=1e-9)


def test_from_autocorr_impossible():
    with pytest.raises(ConfigError):
        EmissionDynamics.from_autocorr(AutocorrParams(1.0, 20e-9, 150e-9), GAMMA)


def test_with_collected_rate():
    dyn = dyn_for(1000.0)
    assert dyn.collected_rate() == pytest.approx(1000.0, rel=1e-12)
    with pytest.raises(ConfigError):
        dyn.with_collected_rate(1e12)


def test_hbt_matches_dynamics_autocorrelation():
    """Empirical g2 of the generative model equals its three-level parameters."""
    p = AutocorrParams(1.0, 6.0525e-9, 150e-9)
    dyn = dyn_for(40000.0, p)
    em = make_emitter(tau1=p.tau1, a=p.a, tau2=p.tau2)
    hist = correlate_batches(hbt_batches(em, dyn, QUIET, 200.0, 11, batch_duration=50.0),
                             CorrelatorConfig())
    assert fraction_within_3sigma(hist, lambda t: g2_auto(t, p)) >= 0.95


def test_impurity_photons_marked():
    em = make_emitter(purity=0.9)
    ph = simulate_emitter_stream(em, dyn_for(1e5), 1.0, seed=3)
    frac = 1 - ph.interferes.mean()
    assert abs(frac - 0.1) < 4 * math.sqrt(0.09 / len(ph))
    assert np.all(ph.center_freq[~ph.interferes] == em.f_Ex + 3e9)


# ------------------------------------------------------------------ detectors


def test_dark_only_counts():
    off = EmissionDynamics(0.0, GAMMA)
    e = make_emitter()
    det = DetectorModel(dark_rate=100.0)
    cs = simulate_hom(PairConfig(e, e, 1.0), off, off, det, 10.0, seed=42)
    for d in "CD":
        assert abs(len(cs.times(d)) - 1000) <= 60
    assert set(cs.counts_by_provenance()) == set(PROVENANCE)
    assert cs.counts_by_provenance()["dark"] == len(cs)
    # Poisson over many seeds: mean and variance of the per-detector count
    n = [len(simulate_hom(PairConfig(e, e, 1.0), off, off, det, 10.0, seed=s).times("C"))
         for s in range(200)]
    assert abs(np.mean(n) - 1000) < 3 * math.sqrt(1000 / 200)
    assert 0.75 < np.var(n, ddof=1) / 1000 < 1.25


def test_count_rate_bookkeeping():
    det = DetectorModel(efficiency=0.8, dark_rate=300.0, background_rate=200.0, jitter_sigma=50e-12)
    d1, d2 = dyn_for(5000.0), dyn_for(3000.0)
    pair = PairConfig(make_emitter(93e6, 88e6), make_emitter(0.0, 106e6), 0.6)
    T = 20.0
    cs = simulate_hom(pair, d1, d2, det, T, seed=8)
    expected = T * (0.8 * (5000 + 3000) / 2 + 500)
    for d in "CD":
        assert abs(len(cs.times(d)) - expected) <= 3 * math.sqrt(expected)
    prov = cs.counts_by_provenance()
    assert abs(prov["signal1"] / prov["signal2"] - 5 / 3) < 0.05


def test_click_stream_invariants():
    det = DetectorModel(dark_rate=2e5, background_rate=1e5, jitter_sigma=1e-9, dead_time=22e-9)
    pair = PairConfig(make_emitter(), make_emitter(), 1.0)
    cs = simulate_hom(pair, dyn_for(2e4), dyn_for(2e4), det, 1.0, seed=9)
    end = round(cs.duration / 1e-12)
    assert cs.time_ps.min() >= 0 and cs.time_ps.max() <= end
    for d in "CD":
        t = cs.times(d)
        assert np.all(np.diff(t) >= 22000)
    assert np.all(np.diff(cs.time_ps) >= 0)


def _dead_time_reference(t, dead):
    keep, last = [], None
    for x in t:
        ok = last is None or x - last >= dead
        keep.append(ok)
        if ok:
            last = x
    return np.array(keep, dtype=bool)


@given(st.lists(st.integers(0, 10_000), max_size=200), st.integers(1, 500))
def test_dead_time_filter_matches_sequential(ts, dead):
    t = np.sort(np.array(ts, dtype=np.int64))
    keep = _dead_time_filter(t, dead)
    assert np.array_equal(keep, _dead_time_reference(t, dead))
    assert np.all(np.diff(t[keep]) >= dead)


def test_detector_validation():
    with pytest.raises(ConfigError):
        DetectorModel(efficiency=1.5)
    with pytest.raises(ConfigError):
        DetectorModel(dark_rate=-1.0)


# ------------------------------------------------------------------ HOM


def test_hom_errors():
    pair = PairConfig(make_emitter(), make_emitter(), 1.0)
    d = dyn_for(1e4)
    with pytest.raises(DomainError):
        simulate_hom(pair, d, d, QUIET, 0.0, 1)
    with pytest.raises(DomainError):
        simulate_hom(pair, d, d, QUIET, 1.0, 1, polarization="diagonal")
    with pytest.raises(ValidityError):
        simulate_hom(pair, dyn_for(1e6), dyn_for(1e6), QUIET, 1.0, 1)
    with pytest.raises(ConfigError):
        simulate_hom(pair, d, d, QUIET, 1.0, None)


def test_hom_determinism():
    pair = PairConfig(make_emitter(93e6, 88e6), make_emitter(0.0, 106e6), 0.6)
    det = DetectorModel(dark_rate=100, background_rate=100, dead_time=22e-9)
    a = simulate_hom(pair, dyn_for(2e4), dyn_for(2e4), det, 2.0, 77)
    b = simulate_hom(pair, dyn_for(2e4), dyn_for(2e4), det, 2.0, 77)
    c = simulate_hom(pair, dyn_for(2e4), dyn_for(2e4), det, 2.0, 78)
    assert a.equals(b)
    assert not a.equals(c)


def test_batches_are_order_independent():
    pair = PairConfig(make_emitter(93e6, 88e6), make_emitter(0.0, 106e6), 0.6)
    streams = list(hom_batches(pair, dyn_for(2e4), dyn_for(2e4), QUIET, 5.0, 3, batch_duration=2.0))
    assert [s.duration for s in streams] == [2.0, 2.0, 1.0]
    assert [s.batch for s in streams] == [0, 1, 2]
    # batch i depends only on (seed, i)
    again = simulate_hom(pair, dyn_for(2e4), dyn_for(2e4), QUIET, 2.0, batch_seed(3, 1))
    assert again.equals(streams[1])
    cfg = CorrelatorConfig()
    hs = [correlate(s, cfg, normalized=False) for s in streams]
    fwd, rev = normalize(merge(hs)), normalize(merge(hs[::-1]))
    assert np.array_equal(fwd.counts, rev.counts)
    assert fwd.rate_C == pytest.approx(rev.rate_C, rel=1e-15)


def test_perfect_hom_has_no_coincidences_at_zero():
    e = make_emitter(tau1=6.0e-9, a=1.0, tau2=150e-9)
    pair = PairConfig(e, e, 1.0)
    d = dyn_for(2e4)
    hist = correlate_batches(hom_batches(pair, d, d, QUIET, 120.0, 21, batch_duration=60.0),
                             CorrelatorConfig(bin_width=512e-12))
    mid = hist.counts.size // 2
    # g2(0) consistent with 0: expected coincidences in the central bin well below one
    center = hist.counts[mid - 1: mid + 2].sum()
    flat = hist.rate_C * hist.rate_D * hist.duration * hist.bin_width
    assert flat > 20
    assert center <= 3
    assert fraction_within_3sigma(hist, lambda t: g2_cross(t, pair)) >= 0.95


def test_perpendicular_equals_distinguishable():
    pair = PairConfig(make_emitter(93e6, 88e6, 6.0525e-9, 1.0, 150e-9),
                      make_emitter(0.0, 106e6, 7.7871e-9, 1.0, 150e-9), 0.6)
    d1 = dyn_for(2.04e4, pair.emitter1.autocorr)
    d2 = dyn_for(2.04e4, pair.emitter2.autocorr)
    hist = correlate_batches(hom_batches(pair, d1, d2, QUIET, 300.0, 5, batch_duration=60.0,
                                         polarization="perpendicular"), CorrelatorConfig())
    dist = PairConfig(pair.emitter1, pair.emitter2, 0.0)
    assert fraction_within_3sigma(hist, lambda t: g2_cross(t, dist)) >= 0.95


# ------------------------------------------------------------------ serialization


def test_click_stream_round_trip(tmp_path):
    pair = PairConfig(make_emitter(), make_emitter(), 1.0)
    det = DetectorModel(dark_rate=1000)
    cs = simulate_hom(pair, dyn_for(1e4), dyn_for(1e4), det, 0.5, 4)
    cs.save_npz(tmp_path / "s.npz")
    cs.save_csv(tmp_path / "s.csv")
    for back in (ClickStream.load_npz(tmp_path / "s.npz"), ClickStream.load_csv(tmp_path / "s.csv")):
        assert back.equals(cs)
        assert back.seed == 4
        assert back.time_ps.dtype == np.int64


def test_click_stream_length_mismatch():
    with pytest.raises(DomainError):
        ClickStream([0, 1], [1], [0, 0], 1.0)


# ------------------------------------------------------------------ PLE


def test_ple_background_only_and_center():
    em = make_emitter(0.0, 88e6)
    scan = np.arange(-500e6, 505e6, 5e6)
    spec = simulate_ple(em, scan, 0.02, 0.0, 1, background_rate=400.0)
    assert np.allclose(spec.expected, 0.02 * 400.0)
    spec = simulate_ple(em, scan, 0.02, 20000.0, 1, background_rate=400.0)
    assert spec.expected[np.argmin(np.abs(scan))] == pytest.approx(0.02 * (20000 + 400), rel=1e-12)
    assert spec.meta["wall_time"] == pytest.approx(scan.size * 0.02 / 20e-6 * 25e-6)


def test_ple_determinism_and_errors():
    em = make_emitter(0.0, 88e6)
    scan = np.linspace(-3e8, 3e8, 121)
    a = simulate_ple(em, scan, 0.01, 1e4, 9)
    b = simulate_ple(em, scan, 0.01, 1e4, 9)
    assert np.array_equal(a.counts, b.counts)
    with pytest.raises(DomainError):
        simulate_ple(em, [], 0.01, 1e4, 9)
    with pytest.raises(DomainError):
        simulate_ple(em, [0.0, 2.0, 1.0], 0.01, 1e4, 9)
    with pytest.raises(DomainError):
        simulate_ple(em, scan, 0.0, 1e4, 9)


def test_hbt_requires_positive_duration():
    with pytest.raises(DomainError):
        simulate_hbt(make_emitter(), dyn_for(1e3), QUIET, 0.0, 1)
