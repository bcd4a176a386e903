import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nvhom.errors import DomainError
from nvhom.stark import (StarkResponse, calibrated_response, scan_crossing, simulate_tuning_scan,
                         transition_freqs, tune_to_resonance)

from conftest import make_emitter

MHZ = 1e6
BASE = (270e6, 2770e6)
coef = st.floats(-1e9, 1e9)
fpv = st.floats(-0.05, 0.05)
volts = st.floats(-30, 50)


def slope_response(slope_hz_per_v, v_range=(-30.0, 50.0)):
    # 0.01 (MV/m)/V common-mode field
    return StarkResponse(0.01, 0.0, slope_hz_per_v / 0.01, 0.0, v_range)


def test_zero_voltage_is_identity():
    resp = StarkResponse(0.01, 0.004, 3e9, 1e9)
    assert transition_freqs(resp, BASE, 0.0) == BASE


def test_common_mode_keeps_splitting():
    resp = StarkResponse(0.01, 0.004, 3e9, 0.0)
    for V in (-30, -2.9, 0, 17, 50):
        ex, ey = transition_freqs(resp, BASE, V)
        assert ex - ey == pytest.approx(BASE[0] - BASE[1], abs=1e-6)


def test_slope_example():
    slope = (270e6 - 25e6) / 2.9
    assert slope / MHZ == pytest.approx(84.5, abs=0.05)
    resp = slope_response(slope)
    ex, _ = transition_freqs(resp, BASE, -2.9)
    assert ex == pytest.approx(25e6, abs=1.0)


def test_range_and_validation():
    resp = slope_response(84.5e6)
    with pytest.raises(DomainError):
        transition_freqs(resp, BASE, 51.0)
    with pytest.raises(DomainError):
        StarkResponse(0.01, 0.0, 1e9, 0.0, (5.0, 5.0))
    with pytest.raises(DomainError):
        StarkResponse(float("nan"), 0.0, 1e9, 0.0)
    with pytest.raises(DomainError):
        tune_to_resonance(resp, BASE, 0.0, "Ez")


def test_tune_examples():
    resp = slope_response(84.5e6)
    assert tune_to_resonance(resp, (0.0, 2e9), 0.0) == (0.0, 0.0)
    cal = calibrated_response()
    v, r = tune_to_resonance(cal, BASE, 0.0)
    assert v == pytest.approx(-2.9, abs=0.3)
    assert r <= 25e6
    assert abs(transition_freqs(cal, BASE, -2.9)[0]) == pytest.approx(25e6, rel=1e-9)
    assert cal.field(50.0) == pytest.approx(0.5)


def test_tune_clips_to_range():
    resp = slope_response(1e6, v_range=(-30.0, 50.0))
    v, r = tune_to_resonance(resp, BASE, 0.0)
    assert v == -30.0
    assert r == pytest.approx(240e6)


@given(fpv, fpv, coef, coef, st.floats(-30, -0.1), st.floats(-0.1, 0.0))
def test_affine_on_each_branch(fp, fq, dpar, dperp, v0, dv):
    resp = StarkResponse(fp, fq, dpar, dperp)
    for lo, hi in ((v0, v0 / 2), (-v0 / 2 + 1, -v0 + 1)):
        mid = 0.5 * (lo + hi)
        f = [transition_freqs(resp, BASE, V)[0] for V in (lo, mid, hi)]
        assert f[1] == pytest.approx(0.5 * (f[0] + f[2]), abs=1e-6 * max(map(abs, f)) + 1e-3)


@given(fpv, fpv, coef, coef, coef, volts)
def test_splitting_independent_of_parallel_coefficient(fp, fq, d1, d2, dperp, V):
    a = transition_freqs(StarkResponse(fp, fq, d1, dperp), BASE, V)
    b = transition_freqs(StarkResponse(fp, fq, d2, dperp), BASE, V)
    assert a[0] - a[1] == pytest.approx(b[0] - b[1], abs=1e-3)


@given(fpv, fpv, coef, coef, st.floats(-2e9, 2e9), st.sampled_from(["Ex", "Ey"]))
def test_optimizer_optimality(fp, fq, dpar, dperp, target, line):
    resp = StarkResponse(fp, fq, dpar, dperp)
    idx = 0 if line == "Ex" else 1
    v, r = tune_to_resonance(resp, BASE, target, line)

    def res(V):
        return abs(transition_freqs(resp, BASE, V)[idx] - target)

    tol = 1e-6 * (abs(target) + 3e9)
    assert r == pytest.approx(res(v), abs=tol)
    for V in (v - 1e-3, v + 1e-3):
        if -30 <= V <= 50:
            assert r <= res(V) + tol
    for V in np.linspace(-30, 50, 161):
        assert r <= res(V) + tol


@pytest.fixture(scope="module")
def scan():
    nv1 = make_emitter(270e6, 85e6)
    nv2 = make_emitter(0.0, 217e6)
    resp = calibrated_response()
    volts = [-30, -25, -20, -15, -10, -5, 0, 5, 10, 20, 30, 40, 50]
    freq = np.arange(-2000e6, 5005e6, 5e6)
    spectra = simulate_tuning_scan(resp, nv1, nv2, volts, freq, 0.05, [20000, 12000], 7,
                                   background_rate=400)
    return resp, nv1, nv2, volts, spectra


def test_single_voltage_scan():
    nv1, nv2 = make_emitter(270e6, 85e6), make_emitter(0.0, 217e6)
    freq = np.arange(-1000e6, 1005e6, 5e6)
    (spec,) = simulate_tuning_scan(calibrated_response(), nv1, nv2, [0.0], freq, 0.05, [2e4, 1.2e4], 1)
    assert spec.meta["nv1_line"] == 270e6 and spec.meta["nv2_line"] == 0.0
    e = spec.expected
    peaks = [i for i in range(1, e.size - 1) if e[i] > e[i - 1] and e[i] >= e[i + 1]]
    assert sorted(freq[peaks]) == [0.0, 270e6]


def test_scan_crosses_once_and_keeps_linewidths(scan):
    resp, nv1, nv2, volts, spectra = scan
    d = np.array([s.meta["nv1_line"] - s.meta["nv2_line"] for s in spectra])
    assert np.count_nonzero(np.diff(np.sign(d)) != 0) == 1
    assert all(s.meta["nv1_fwhm"] == 85e6 and s.meta["nv2_fwhm"] == 217e6 for s in spectra)
    assert [s.meta["display_offset"] for s in spectra[:3]] == [0, 20e3, 40e3]


def test_scan_crossing_matches_optimizer(scan):
    resp, nv1, nv2, volts, spectra = scan
    v_opt, _ = tune_to_resonance(resp, (nv1.f_Ex, nv1.f_Ey), 0.0)
    vc = scan_crossing(spectra, nv1.sd_fwhm, 0.0)
    assert abs(vc - v_opt) <= 5.0


def test_scan_determinism(scan):
    resp, nv1, nv2, volts, spectra = scan
    again = simulate_tuning_scan(resp, nv1, nv2, volts, spectra[0].freq, 0.05, [20000, 12000], 7,
                                 background_rate=400)
    assert all(np.array_equal(a.counts, b.counts) for a, b in zip(spectra, again))
