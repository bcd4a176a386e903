"""
Linear DC Stark response of an NV optical transition pair and detuning
minimization with a single gate voltage.

The gate produces a field proportional to the applied voltage. Its component
along the NV axis shifts Ex and Ey together. The transverse component splits
them symmetrically by d_perp |E_perp| (the sign of E_perp is dropped).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .mc import simulate_ple
from .model import EmitterModel

__all__ = ["StarkResponse", "transition_freqs", "tune_to_resonance", "simulate_tuning_scan",
           "calibrated_response", "scan_crossing"]


@dataclass(frozen=True)
class StarkResponse:
    """Field per volt in (MV/m)/V, shift coefficients in Hz/(MV/m)."""

    field_per_volt_par: float
    field_per_volt_perp: float
    d_parallel: float
    d_perp: float
    v_range: tuple = (-30.0, 50.0)

    def __post_init__(self):
        lo, hi = self.v_range
        if not lo < hi:
            raise DomainError("v_range must be nonempty (V_min < V_max)")
        for name in ("field_per_volt_par", "field_per_volt_perp", "d_parallel", "d_perp"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"{name} must be finite")

    def field(self, V):
        """|E| at the emitter in MV/m."""
        return abs(V) * math.hypot(self.field_per_volt_par, self.field_per_volt_perp)

    def slopes(self):
        """df_Ex/dV for V > 0 and V < 0 (the |E_perp| term flips sign)."""
        common = self.d_parallel * self.field_per_volt_par
        split = self.d_perp * abs(self.field_per_volt_perp)
        return common + split, common - split


def _check_range(resp, V):
    lo, hi = resp.v_range
    if not lo <= V <= hi:
        raise DomainError(f"V={V:g} outside v_range {resp.v_range}")


def transition_freqs(resp: StarkResponse, base, V):
    _check_range(resp, V)
    f_ex, f_ey = base
    e_par = resp.field_per_volt_par * V
    e_perp = resp.field_per_volt_perp * V
    common = resp.d_parallel * e_par
    split = resp.d_perp * abs(e_perp)
    return f_ex + common + split, f_ey + common - split


def tune_to_resonance(resp: StarkResponse, nv1_base, nv2_fixed, target_line="Ex"):
    """Voltage minimizing |f_line(V) - nv2_fixed| over v_range.

    The response is piecewise linear with a kink at V = 0, so each branch is
    solved in closed form and clipped to its half of the range.
    """
    if target_line not in ("Ex", "Ey"):
        raise DomainError("target_line must be 'Ex' or 'Ey'")
    idx = 0 if target_line == "Ex" else 1
    lo, hi = resp.v_range

    def resid(V):
        return transition_freqs(resp, nv1_base, V)[idx] - nv2_fixed

    candidates = {min(max(0.0, lo), hi), lo, hi}
    for branch_lo, branch_hi in ((max(lo, 0.0), hi), (lo, min(hi, 0.0))):
        if branch_lo >= branch_hi:
            continue
        # affine on each branch: slope from its two end points
        v0, v1 = branch_lo, branch_hi
        slope = (resid(v1) - resid(v0)) / (v1 - v0)
        if slope != 0:
            v_star = v0 - resid(v0) / slope
            candidates.add(min(max(v_star, branch_lo), branch_hi))
    best = min(sorted(candidates), key=lambda V: (abs(resid(V)), abs(V)))
    return best, abs(resid(best))


def calibrated_response(detuning_initial=270e6, detuning_tuned=25e6, v_tuned=-2.9,
                        v_max=50.0, field_max=0.5, v_range=(-30.0, 50.0), perp_fraction=0.0):
    """Linear response reproducing two detuning anchors and a field scale.

    The Ex shift slope is (detuning_initial - detuning_tuned) / |v_tuned|
    per volt, pointing so that ``v_tuned`` reduces the detuning. The field
    per volt is field_max / v_max, split into perpendicular and parallel
    parts by ``perp_fraction``. With perp_fraction = 0 the response is a
    pure common-mode shift.
    """
    if v_tuned == 0:
        raise DomainError("v_tuned must be nonzero")
    slope = -(detuning_initial - detuning_tuned) / v_tuned  # Hz/V
    fpv = field_max / v_max
    f_perp = fpv * perp_fraction
    f_par = fpv * math.sqrt(max(1.0 - perp_fraction**2, 0.0))
    if f_par == 0:
        raise DomainError("perp_fraction = 1 leaves no common-mode response")
    # for V < 0 the Ex slope is d_par f_par - d_perp f_perp; keep d_perp = 0 by default
    d_par = slope / f_par
    return StarkResponse(f_par, f_perp, d_par, 0.0, v_range)


def simulate_tuning_scan(resp: StarkResponse, nv1: EmitterModel, nv2: EmitterModel, V_grid,
                         scan, dwell, peak_rate, seed, background_rate=0.0, line="Ex",
                         display_offset=20e3):
    """PLE spectra of the tuned emitter (nv1) and the fixed one (nv2) per voltage.

    Linewidths are left unchanged by the field. ``display_offset`` (counts/s)
    is presentation metadata only.
    """
    out = []
    ss = np.random.SeedSequence(int(seed))
    children = ss.spawn(len(V_grid))
    for i, (V, child) in enumerate(zip(V_grid, children)):
        f_ex, f_ey = transition_freqs(resp, (nv1.f_Ex, nv1.f_Ey), V)
        shifted = nv1.shifted(f_ex, f_ey)
        spec = simulate_ple([shifted, nv2], scan, dwell, peak_rate, child,
                            background_rate=background_rate, line=line)
        spec.meta.update({"V": float(V), "nv1_line": shifted.line(line), "nv2_line": nv2.line(line),
                          "nv1_fwhm": nv1.sd_fwhm, "nv2_fwhm": nv2.sd_fwhm,
                          "display_offset": display_offset * i, "seed": int(seed)})
        out.append(spec)
    return out


def scan_crossing(scan_spectra, nv1_fwhm, nv2_center, fit_window=None):
    """Voltage at which the tuned line crosses a fixed line, from fitted peaks.

    The tuned line's center is fitted in a window around its expected
    position for spectra where the two lines are at least two linewidths
    apart and the line lies inside the scan; a straight line through those
    centers gives the crossing.
    """
    from .fitting import fit_lorentzian

    half = fit_window or 1.5 * nv1_fwhm
    V, centers = [], []
    for spec in scan_spectra:
        guess = spec.meta["nv1_line"]
        if abs(guess - nv2_center) < 2 * (nv1_fwhm + spec.meta.get("nv2_fwhm", nv1_fwhm)):
            continue
        if not spec.freq.min() + half <= guess <= spec.freq.max() - half:
            continue  # tuned line (nearly) outside the laser scan
        fit = fit_lorentzian(spec, window=(guess - half, guess + half))
        V.append(spec.meta["V"])
        centers.append(fit.params["center"])
    if len(V) < 2:
        raise DomainError("need two well-separated spectra to locate the crossing")
    V = np.array(V)
    centers = np.array(centers)
    neg, pos = V < 0, V > 0
    # the response may kink at 0; use the branch containing the sign change
    for branch in (neg, pos, np.ones_like(V, bool)):
        if branch.sum() >= 2:
            slope, icept = np.polyfit(V[branch], centers[branch], 1)
            vc = (nv2_center - icept) / slope
            if (branch is neg and vc <= 0) or (branch is pos and vc >= 0) or branch.all():
                return float(vc)
    raise DomainError("no crossing found")
