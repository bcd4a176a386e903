"""
Closed-form correlation functions for two remote single-photon emitters.

All quantities are SI: times in seconds, rates in s^-1, frequencies in Hz.
Frequencies of optical lines are offsets from an arbitrary common reference
(only differences enter the physics).

The two-photon cross-correlation at the outputs of a balanced 50:50
beamsplitter is

    g2(tau) = 1/4 g2_11(tau) + 1/4 g2_22(tau)
              + 1/2 [1 - xi g1_11(tau) g1_22(tau) cos(2 pi df tau)]

where g2_ii are the single-emitter autocorrelations, g1_ii(tau) =
exp(-gamma |tau| / 2) and xi is a phenomenological interference amplitude.
When the emitters' center frequencies wander (spectral diffusion), the
cosine is averaged over a Lorentzian detuning distribution which multiplies
it by exp(-pi (w1 + w2) |tau|), w_i being the Lorentzian FWHMs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DomainError, NotFoundError

__all__ = [
    "AutocorrParams",
    "EmitterModel",
    "PairConfig",
    "g1",
    "g2_auto",
    "dephasing_envelope",
    "g2_cross",
    "with_background",
    "interference_feature_width",
    "dip_fwhm",
    "default_tau_grid",
]

#: correlator resolution used for default delay grids
DEFAULT_BIN = 64e-12
DEFAULT_WINDOW = 100e-9


def _finite_tau(tau):
    t = np.asarray(tau, dtype=float)
    if not np.all(np.isfinite(t)):
        raise DomainError("tau must be finite")
    return t


def _scalar_or_array(x):
    return float(x) if np.ndim(x) == 0 else x


@dataclass(frozen=True)
class AutocorrParams:
    """Three-level antibunching/bunching shape.

    g2(tau) = 1 - (1 + a) exp(-|tau|/tau1) + a exp(-|tau|/tau2)
    """

    a: float
    tau1: float
    tau2: float

    def __post_init__(self):
        for name in ("a", "tau1", "tau2"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"AutocorrParams.{name} must be finite")
        if self.a < 0:
            raise DomainError("AutocorrParams.a must be >= 0")
        if self.tau1 <= 0 or self.tau2 <= 0:
            raise DomainError("AutocorrParams.tau1 and tau2 must be > 0")


@dataclass(frozen=True)
class EmitterModel:
    """Optical parameters of one emitter.

    ``f_Ex``/``f_Ey`` are line centers (Hz, relative to a common reference),
    ``gamma`` the radiative rate, ``sd_fwhm`` the Lorentzian FWHM of the
    spectral-diffusion distribution of the selected (Ex) line and
    ``spin_purity`` the fraction of collected emission coming from that line.
    """

    f_Ex: float
    f_Ey: float
    gamma: float
    sd_fwhm: float
    autocorr: AutocorrParams
    spin_purity: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.f_Ex) and math.isfinite(self.f_Ey)):
            raise DomainError("emitter line frequencies must be finite")
        if not (math.isfinite(self.gamma) and self.gamma > 0):
            raise DomainError("gamma must be > 0")
        if not (math.isfinite(self.sd_fwhm) and self.sd_fwhm >= 0):
            raise DomainError("sd_fwhm must be >= 0")
        if not 0.0 <= self.spin_purity <= 1.0:
            raise DomainError("spin_purity must lie in [0, 1]")

    def line(self, which="Ex"):
        if which == "Ex":
            return self.f_Ex
        if which == "Ey":
            return self.f_Ey
        raise DomainError(f"unknown line {which!r}")

    def shifted(self, f_Ex, f_Ey=None):
        return replace(self, f_Ex=f_Ex, f_Ey=self.f_Ey if f_Ey is None else f_Ey)


@dataclass(frozen=True)
class PairConfig:
    """Two emitters feeding the two input ports of a balanced beamsplitter.

    ``delta_f0`` is the mean detuning of the selected lines, f_Ex,1 - f_Ex,2.
    Left as ``None`` it is taken from the emitters; if given it must agree
    with them.
    """

    emitter1: EmitterModel
    emitter2: EmitterModel
    xi: float = 1.0
    delta_f0: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.xi <= 1.0:
            raise DomainError("xi must lie in [0, 1]")
        implied = self.emitter1.f_Ex - self.emitter2.f_Ex
        if self.delta_f0 is None:
            object.__setattr__(self, "delta_f0", implied)
        else:
            if not math.isfinite(self.delta_f0):
                raise DomainError("delta_f0 must be finite")
            if abs(self.delta_f0 - implied) > 1.0 + 1e-9 * abs(implied):
                raise DomainError(
                    f"delta_f0={self.delta_f0:g} Hz inconsistent with emitter "
                    f"line centers (f_Ex1 - f_Ex2 = {implied:g} Hz)"
                )

    @property
    def gamma_bar(self):
        """Decay rate of g1_11 * g1_22."""
        return 0.5 * (self.emitter1.gamma + self.emitter2.gamma)

    @property
    def fwhm_sum(self):
        return self.emitter1.sd_fwhm + self.emitter2.sd_fwhm


def g1(tau, gamma):
    """Slowly varying first-order coherence exp(-gamma |tau| / 2)."""
    t = _finite_tau(tau)
    if not (np.isfinite(gamma) and gamma > 0):
        raise DomainError("gamma must be > 0")
    return _scalar_or_array(np.exp(-0.5 * gamma * np.abs(t)))


def g2_auto(tau, p: AutocorrParams):
    if not isinstance(p, AutocorrParams):
        raise DomainError("p must be AutocorrParams")
    t = np.abs(_finite_tau(tau))
    e1 = np.exp(-t / p.tau1)
    # grouped so that the origin value is exactly zero
    out = (1.0 - e1) + p.a * (np.exp(-t / p.tau2) - e1)
    return _scalar_or_array(out)


def dephasing_envelope(tau, fwhm1, fwhm2):
    """Average of cos(2 pi (nu1 - nu2) tau) over two Lorentzian line centers.

    The difference of two independent Cauchy variables is Cauchy with FWHM
    fwhm1 + fwhm2; its characteristic function gives exp(-pi FWHM |tau|).
    The mean detuning is not included here.
    """
    if fwhm1 < 0 or fwhm2 < 0:
        raise DomainError("FWHM must be >= 0")
    t = _finite_tau(tau)
    return _scalar_or_array(np.exp(-math.pi * (fwhm1 + fwhm2) * np.abs(t)))


def g2_cross(tau, cfg: PairConfig, envelope_on=True):
    """Normalized cross-correlation at the two beamsplitter outputs.

    Assumes balanced input intensities. With ``envelope_on`` the interference
    term is averaged over spectral diffusion of both lines.
    """
    t = _finite_tau(tau)
    e1, e2 = cfg.emitter1, cfg.emitter2
    coh = np.exp(-cfg.gamma_bar * np.abs(t)) * np.cos(2 * math.pi * cfg.delta_f0 * t)
    if envelope_on:
        coh = coh * dephasing_envelope(t, e1.sd_fwhm, e2.sd_fwhm)
    out = (
        0.25 * np.asarray(g2_auto(t, e1.autocorr))
        + 0.25 * np.asarray(g2_auto(t, e2.autocorr))
        + 0.5 * (1.0 - cfg.xi * coh)
    )
    return _scalar_or_array(out)


def with_background(g2, signal_fraction_c=1.0, signal_fraction_d=1.0):
    """Dilute a signal correlation by uncorrelated counts on each detector.

    rho = signal/(signal+noise) per detector; uncorrelated clicks add a flat
    1 - rho_c rho_d.
    """
    for r in (signal_fraction_c, signal_fraction_d):
        if not 0.0 <= r <= 1.0:
            raise DomainError("signal fractions must lie in [0, 1]")
    rr = signal_fraction_c * signal_fraction_d
    return _scalar_or_array(1.0 - rr + rr * np.asarray(g2, dtype=float))


def interference_feature_width(cfg: PairConfig, include_gamma=True):
    """1/e full width of the interference term's envelope.

    By default includes both the g1 product decay and spectral-diffusion
    dephasing: 2 / (gamma_bar + pi (w1 + w2)). With ``include_gamma=False``
    only the dephasing contributes: 2 / (pi (w1 + w2)).
    """
    rate = math.pi * cfg.fwhm_sum
    if include_gamma:
        rate += cfg.gamma_bar
    if rate <= 0:
        raise DomainError("all rates zero: interference feature has infinite width")
    return 2.0 / rate


def default_tau_grid(bin_width=DEFAULT_BIN, window=DEFAULT_WINDOW):
    n = int(window // bin_width)
    return np.arange(-n, n + 1) * bin_width


def _crossing(t0, t1, y0, y1, level):
    if y1 == y0:
        return t0
    return t0 + (level - y0) * (t1 - t0) / (y1 - y0)


def dip_fwhm(tau, g2, baseline_window=(20e-9, 40e-9)):
    """Full width of the central dip at half depth.

    Half depth is midway between g2(0) and the baseline, the mean of the
    curve over ``baseline_window[0] <= |tau| <= baseline_window[1]``. The
    crossings on each side of tau = 0 are located by linear interpolation
    between bracketing samples.
    """
    t = _finite_tau(tau)
    y = np.asarray(g2, dtype=float)
    if t.shape != y.shape or t.ndim != 1 or t.size < 3:
        raise DomainError("tau and g2 must be 1-D arrays of equal length >= 3")
    if np.any(np.diff(t) <= 0):
        raise DomainError("tau must be strictly increasing")
    lo, hi = baseline_window
    sel = (np.abs(t) >= lo) & (np.abs(t) <= hi)
    if not sel.any():
        raise DomainError("baseline window contains no samples")
    baseline = y[sel].mean()
    if not t[0] <= 0 <= t[-1]:
        raise DomainError("curve must cover tau = 0")
    y0 = float(np.interp(0.0, t, y))
    depth = baseline - y0
    if not depth > 1e-12 * max(1.0, abs(baseline)):
        raise NotFoundError("no central dip below the baseline")
    half = y0 + 0.5 * depth

    i0 = int(np.searchsorted(t, 0.0))
    right = None
    for i in range(max(i0, 1), t.size):
        if y[i] >= half and y[i - 1] < half:
            right = _crossing(t[i - 1], t[i], y[i - 1], y[i], half)
            break
    left = None
    for i in range(min(i0, t.size - 1), 0, -1):
        if y[i - 1] >= half and y[i] < half:
            left = _crossing(t[i - 1], t[i], y[i - 1], y[i], half)
            break
    if right is None or left is None:
        raise NotFoundError("dip does not recover to half depth inside the curve")
    return right - left
