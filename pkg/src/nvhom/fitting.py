"""
Weighted nonlinear least squares for PLE lines and correlation histograms.

The optimizer is a plain Levenberg-Marquardt iteration with Marquardt
(diagonal) scaling and analytic Jacobians. A step is accepted only if it
lowers the weighted residual norm. Parameter uncertainties come from the
inverse of J^T J at the optimum, with Poisson weights var = max(counts, 1);
spectra are refit once with the variance of the first solution.

Models work internally in well-scaled units (MHz for spectra; ns and GHz for
correlations). Results are reported in SI.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError, FitError, NotFoundError
from .model import PairConfig, dip_fwhm

__all__ = [
    "FitResult",
    "levenberg_marquardt",
    "fit_lorentzian",
    "fit_g2",
    "lorentzian_model",
    "g2_fit_model",
    "fitted_g2_zero",
    "fitted_dip_fwhm",
]

MAX_ITER = 200
XTOL = 1e-8
FTOL = 1e-10


@dataclass
class LMState:
    p: np.ndarray
    cost: float
    n_iter: int
    lam: float
    history: list


def levenberg_marquardt(residual: Callable, jacobian: Callable, p0, valid=None,
                        max_iter=MAX_ITER, xtol=XTOL, ftol=FTOL, lam0=1e-3):
    """Minimize 1/2 |r(p)|^2.

    ``residual(p)`` returns weighted residuals, ``jacobian(p)`` their
    derivative (n_data x n_par). ``valid(p)`` may reject trial points.
    Returns an :class:`LMState`. ``history`` lists the cost after every
    accepted step and is non-increasing.
    """
    p = np.asarray(p0, dtype=float).copy()
    r = residual(p)
    cost = 0.5 * float(r @ r)
    if not math.isfinite(cost):
        raise FitError("initial point gives non-finite residuals",
                       LMState(p, cost, 0, lam0, [cost]))
    lam = lam0
    history = [cost]
    for it in range(1, max_iter + 1):
        J = jacobian(p)
        A = J.T @ J
        g = J.T @ r
        diag = np.diag(A).copy()
        diag[diag <= 0] = 1.0
        while True:
            try:
                step = np.linalg.solve(A + lam * np.diag(diag), -g)
            except np.linalg.LinAlgError:
                step = None
            if step is not None:
                trial = p + step
                ok = valid is None or valid(trial)
                if ok:
                    r_new = residual(trial)
                    cost_new = 0.5 * float(r_new @ r_new)
                    if math.isfinite(cost_new) and cost_new <= cost:
                        break
            lam *= 10.0
            if lam > 1e20:
                # no descent direction left: at a (numerical) minimum
                return LMState(p, cost, it, lam, history)
        rel_step = np.linalg.norm(step) / (np.linalg.norm(p) + XTOL)
        rel_drop = (cost - cost_new) / cost if cost > 0 else 0.0
        p, r, cost = trial, r_new, cost_new
        history.append(cost)
        lam = max(lam / 10.0, 1e-12)
        if rel_step < xtol or rel_drop < ftol:
            return LMState(p, cost, it, lam, history)
    raise FitError(f"no convergence after {max_iter} iterations",
                   LMState(p, cost, max_iter, lam, history))


@dataclass
class FitResult:
    params: dict
    sigmas: dict
    chi2_reduced: float
    converged: bool
    n_iter: int
    model: str = ""
    free: tuple = ()
    fixed: dict = field(default_factory=dict)
    covariance: np.ndarray | None = None
    cost_history: list = field(default_factory=list)
    settings: dict = field(default_factory=dict)
    _predict: Callable | None = field(default=None, repr=False)
    _grad: Callable | None = field(default=None, repr=False)

    def __getitem__(self, name):
        return self.params[name]

    def predict(self, x):
        return self._predict(np.asarray(x, dtype=float), self.params)

    def predict_sigma(self, x):
        """1-sigma of the fitted curve at x from the parameter covariance."""
        G = self._grad(np.asarray(x, dtype=float), self.params)  # (n_x, n_free)
        return np.sqrt(np.einsum("ij,jk,ik->i", G, self.covariance, G))

    def settings_hash(self):
        blob = json.dumps(self.settings, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def to_dict(self):
        return {
            "model": self.model,
            "params": {k: float(v) for k, v in self.params.items()},
            "sigmas": {k: float(v) for k, v in self.sigmas.items()},
            "fixed": sorted(self.fixed),
            "chi2_reduced": float(self.chi2_reduced),
            "converged": bool(self.converged),
            "n_iter": int(self.n_iter),
            "settings_hash": self.settings_hash(),
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), sort_keys=True, **kw)


def _finish(state: LMState, J, names, free_idx, n_data, to_si, model, fixed, settings,
            predict, grad):
    n_free = len(free_idx)
    try:
        cov_int = np.linalg.inv(J.T @ J)
    except np.linalg.LinAlgError:
        raise FitError("singular normal matrix at the optimum", state)
    scale = np.array([to_si[names[i]] for i in free_idx])
    cov = cov_int * np.outer(scale, scale)
    sig = np.sqrt(np.clip(np.diag(cov), 0, None))
    dof = max(n_data - n_free, 1)
    params = dict(fixed)
    for j, i in enumerate(free_idx):
        params[names[i]] = state.p[j] * to_si[names[i]]
    sigmas = {names[i]: float(sig[j]) for j, i in enumerate(free_idx)}
    for k in fixed:
        sigmas[k] = 0.0
    return FitResult(
        params={k: float(params[k]) for k in names},
        sigmas={k: sigmas[k] for k in names},
        chi2_reduced=2 * state.cost / dof,
        converged=True,
        n_iter=state.n_iter,
        model=model,
        free=tuple(names[i] for i in free_idx),
        fixed={k: float(v) for k, v in fixed.items()},
        covariance=cov,
        cost_history=list(state.history),
        settings=settings,
        _predict=predict,
        _grad=grad,
    )


# ---------------------------------------------------------------- Lorentzian

LORENTZ_NAMES = ("center", "fwhm", "amplitude", "offset")
_MHZ = 1e6


def lorentzian_model(f, p):
    """offset + amplitude (fwhm/2)^2 / ((f - center)^2 + (fwhm/2)^2).

    Returns (value, jacobian) with jacobian columns in LORENTZ_NAMES order.
    """
    c, w, amp, off = p
    d = f - c
    hw = 0.5 * w
    den = d * d + hw * hw
    L = hw * hw / den
    J = np.empty((f.size, 4))
    J[:, 0] = amp * hw * hw * 2 * d / den**2
    J[:, 1] = amp * hw * d * d / den**2
    J[:, 2] = L
    J[:, 3] = 1.0
    return off + amp * L, J


def _lorentz_init(f, y):
    i = int(np.argmax(y))
    n_tail = max(1, f.size // 10)
    offset = float(np.median(np.concatenate([y[:n_tail], y[-n_tail:]])))
    amp = float(y[i]) - offset
    if not amp > 3.0 * math.sqrt(max(offset, 1.0)):
        raise NotFoundError("no peak above the baseline")
    half = offset + 0.5 * amp
    lo = i
    while lo > 0 and y[lo - 1] >= half:
        lo -= 1
    hi = i
    while hi < f.size - 1 and y[hi + 1] >= half:
        hi += 1
    fl = f[lo] if lo == 0 else f[lo - 1] + (half - y[lo - 1]) * (f[lo] - f[lo - 1]) / (y[lo] - y[lo - 1])
    fh = f[hi] if hi == f.size - 1 else f[hi] + (y[hi] - half) * (f[hi + 1] - f[hi]) / (y[hi] - y[hi + 1])
    width = max(fh - fl, 2 * np.min(np.abs(np.diff(f))))
    return np.array([f[i], width, amp, offset])


def _spectrum_arrays(spectrum):
    if hasattr(spectrum, "freq"):
        return np.asarray(spectrum.freq, float), np.asarray(spectrum.counts, float)
    f, y = spectrum
    return np.asarray(f, float), np.asarray(y, float)


def fit_lorentzian(spectrum, init=None, window=None, max_iter=MAX_ITER, reweight=True):
    """Fit a single Lorentzian plus constant offset to a counts spectrum.

    Parameters
    ----------
    spectrum : PLESpectrum or (freq, counts)
        Frequencies in Hz, nonnegative counts.
    init : dict, optional
        Starting values (SI) overriding the data-driven guess.
    window : (f_min, f_max), optional
        Restrict the fit to this frequency interval (e.g. one of two peaks).
    reweight : bool
        After the fit with variance max(counts, 1), refit once with the
        variance max(model, 1) of the first solution. Uncertainties and
        ``cost_history`` refer to the final pass.
    """
    f, y = _spectrum_arrays(spectrum)
    if window is not None:
        sel = (f >= window[0]) & (f <= window[1])
        f, y = f[sel], y[sel]
    if f.size < 5:
        raise DomainError("need at least 5 points")
    if np.any(y < 0):
        raise DomainError("counts must be nonnegative")
    order = np.argsort(f)
    f, y = f[order], y[order]
    x = f / _MHZ
    sigma = np.sqrt(np.maximum(y, 1.0))
    p0 = _lorentz_init(x, y)
    if init:
        for k, v in init.items():
            p0[LORENTZ_NAMES.index(k)] = v / _MHZ if k in ("center", "fwhm") else v

    def resid(p):
        return (y - lorentzian_model(x, p)[0]) / sigma

    def jac(p):
        return -lorentzian_model(x, p)[1] / sigma[:, None]

    state = levenberg_marquardt(resid, jac, p0, valid=lambda p: p[1] > 0, max_iter=max_iter)
    if reweight:
        # observed-count weights favour low fluctuations; one refit with the
        # fitted model's variance removes most of that bias at low counts
        sigma = np.sqrt(np.maximum(lorentzian_model(x, state.p)[0], 1.0))
        state = levenberg_marquardt(resid, jac, state.p, valid=lambda p: p[1] > 0, max_iter=max_iter)
    to_si = {"center": _MHZ, "fwhm": _MHZ, "amplitude": 1.0, "offset": 1.0}

    def predict(ff, params):
        p = [params["center"] / _MHZ, params["fwhm"] / _MHZ, params["amplitude"], params["offset"]]
        return lorentzian_model(np.atleast_1d(ff) / _MHZ, p)[0]

    def grad(ff, params):
        p = [params["center"] / _MHZ, params["fwhm"] / _MHZ, params["amplitude"], params["offset"]]
        J = lorentzian_model(np.atleast_1d(ff) / _MHZ, p)[1]
        return J / np.array([to_si[k] for k in LORENTZ_NAMES])

    return _finish(state, jac(state.p), LORENTZ_NAMES, list(range(4)), f.size, to_si,
                   "lorentzian", {}, {"window": window, "n": int(f.size), "reweight": reweight},
                   predict, grad)


# --------------------------------------------------------------- correlation

_NS = 1e-9
_GHZ = 1e9
_AUTO_KEYS = ("a", "tau1", "tau2")


def _names(model, emitters):
    if model == "auto":
        return ("norm", "contrast", "a", "tau1", "tau2")
    if model != "cross":
        raise DomainError("model must be 'auto' or 'cross'")
    if emitters == "shared":
        auto = ("a", "tau1", "tau2")
    elif emitters == "per-emitter":
        auto = ("a1", "tau1_1", "tau2_1", "a2", "tau1_2", "tau2_2")
    else:
        raise DomainError("emitters must be 'shared' or 'per-emitter'")
    return ("norm", "contrast", "xi") + auto + ("gamma", "delta_f0", "fwhm_sum")


def _unit(name):
    if name.startswith("tau"):
        return _NS
    if name in ("gamma", "delta_f0", "fwhm_sum"):
        return _GHZ
    return 1.0


def _auto_and_grad(t, a, t1, t2):
    e1 = np.exp(-t / t1)
    e2 = np.exp(-t / t2)
    val = (1.0 - e1) + a * (e2 - e1)
    return val, (e2 - e1, -(1.0 + a) * e1 * t / t1**2, a * e2 * t / t2**2)


def g2_fit_model(tau_ns, p: dict, model, emitters="shared"):
    """Correlation fit model in internal units (ns, GHz).

    auto:  norm [1 - contrast (1 - A(tau))]
    cross: norm [1 - contrast (1 - G(tau))],
           G = A1/4 + A2/4 + 1/2 [1 - xi exp(-(gamma + pi W)|tau|) cos(2 pi d tau)]

    Returns (value, {name: derivative}).
    """
    t = np.abs(tau_ns)
    norm, c = p["norm"], p["contrast"]
    d = {}
    if model == "auto":
        A, (da, dt1, dt2) = _auto_and_grad(t, p["a"], p["tau1"], p["tau2"])
        G = A
        k = norm * c
        d["a"], d["tau1"], d["tau2"] = k * da, k * dt1, k * dt2
    else:
        env = np.exp(-(p["gamma"] + math.pi * p["fwhm_sum"]) * t)
        osc = np.cos(2 * math.pi * p["delta_f0"] * tau_ns)
        inter = env * osc
        if emitters == "shared":
            A, (da, dt1, dt2) = _auto_and_grad(t, p["a"], p["tau1"], p["tau2"])
            G = 0.5 * A + 0.5 * (1.0 - p["xi"] * inter)
            k = 0.5 * norm * c
            d["a"], d["tau1"], d["tau2"] = k * da, k * dt1, k * dt2
        else:
            A1, g1 = _auto_and_grad(t, p["a1"], p["tau1_1"], p["tau2_1"])
            A2, g2 = _auto_and_grad(t, p["a2"], p["tau1_2"], p["tau2_2"])
            G = 0.25 * A1 + 0.25 * A2 + 0.5 * (1.0 - p["xi"] * inter)
            k = 0.25 * norm * c
            for name, g in zip(("a1", "tau1_1", "tau2_1"), g1):
                d[name] = k * g
            for name, g in zip(("a2", "tau1_2", "tau2_2"), g2):
                d[name] = k * g
        d["xi"] = -0.5 * norm * c * inter
        k = 0.5 * norm * c * p["xi"]
        d["gamma"] = k * t * inter
        d["fwhm_sum"] = k * math.pi * t * inter
        d["delta_f0"] = k * env * np.sin(2 * math.pi * p["delta_f0"] * tau_ns) * 2 * math.pi * tau_ns
    val = norm * (1.0 - c * (1.0 - G))
    d["norm"] = 1.0 - c * (1.0 - G)
    d["contrast"] = -norm * (1.0 - G)
    return val, d


def _g2_init(tau_ns, g, model, names):
    """Data-driven starting point: unit asymptote, half-depth width, peak bunching."""
    n = g.size
    k = max(1, n // 50)
    smooth = np.convolve(g, np.ones(k) / k, mode="same")
    centre = np.abs(tau_ns) <= max(0.3, 2 * np.min(np.abs(np.diff(tau_ns))))
    g0 = float(np.mean(g[centre]))
    peak = float(np.max(smooth))
    init = {"norm": 1.0, "contrast": 1.0, "a": max(peak - 1.0, 0.05), "tau2": np.max(np.abs(tau_ns)) / 2}
    try:
        w = dip_fwhm(tau_ns, smooth, baseline_window=(0.2 * np.max(tau_ns), 0.4 * np.max(tau_ns)))
        init["tau1"] = max(w / (2 * math.log(2)), 0.2)
    except (NotFoundError, DomainError):
        init["tau1"] = 5.0
    if model == "cross":
        init["xi"] = float(np.clip(2.0 * (1.0 - g0) - 1.0, 0.0, 1.0))
        for i in (1, 2):
            init[f"a{i}"] = init["a"]
            init[f"tau1_{i}"] = init["tau1"] * (0.9 if i == 1 else 1.1)
            init[f"tau2_{i}"] = init["tau2"]
    return init


def _hist_sigma(hist):
    norm = hist.meta.get("norm_factor")
    if not norm:
        raise DomainError("histogram must be normalized before fitting")
    return np.sqrt(np.maximum(hist.counts, 1.0)) / norm


def fit_g2(hist, model="auto", fixed=None, init=None, pair: PairConfig | None = None,
           emitters="shared", tau_range=None, free=(), max_iter=MAX_ITER, reweight=True):
    """Fit a normalized correlation histogram.

    Parameters
    ----------
    hist : CorrelationHistogram
        Normalized (``g2`` present).
    model : {'auto', 'cross'}
        'auto' fits the three-level autocorrelation (a, tau1, tau2) and an
        amplitude; 'cross' fits the interference amplitude ``xi`` and the
        autocorrelation parameters with the interference envelope held fixed.
    fixed : dict, optional
        Parameter values (SI) held constant. 'contrast' defaults to fixed 1
        unless listed in ``free``. For 'cross', 'gamma', 'delta_f0' and
        'fwhm_sum' are always fixed and default to the values of ``pair``.
    emitters : {'shared', 'per-emitter'}
        Whether both emitters share one autocorrelation shape (cross only).
    tau_range : float, optional
        Fit only |tau| <= tau_range.
    free : sequence of str
        Parameters to release from their default fixed values ('contrast').
    reweight : bool
        Refit once with the variance of the first solution (as in
        :func:`fit_lorentzian`).
    """
    if hist.g2 is None:
        raise DomainError("histogram must be normalized before fitting")
    names = _names(model, emitters)
    fixed = dict(fixed or {})
    if "contrast" not in free:
        fixed.setdefault("contrast", 1.0)
    if model == "cross":
        env_keys = ("gamma", "delta_f0", "fwhm_sum")
        if pair is not None:
            fixed.setdefault("gamma", pair.gamma_bar)
            fixed.setdefault("delta_f0", pair.delta_f0)
            fixed.setdefault("fwhm_sum", pair.fwhm_sum)
        missing = [k for k in env_keys if k not in fixed]
        if missing:
            raise DomainError(f"cross fit needs fixed {missing} (or a PairConfig)")
    unknown = set(fixed) - set(names)
    if unknown:
        raise DomainError(f"unknown parameters {sorted(unknown)}")

    tau = np.asarray(hist.bin_centers, float)
    g = np.asarray(hist.g2, float)
    sigma = _hist_sigma(hist)
    if tau_range is not None:
        sel = np.abs(tau) <= tau_range
        tau, g, sigma = tau[sel], g[sel], sigma[sel]
    x = tau / _NS

    start = _g2_init(x, g, model, names)
    for k, v in (init or {}).items():
        start[k] = v / _unit(k)
    values = {k: start.get(k, 0.0) for k in names}
    for k, v in fixed.items():
        values[k] = v / _unit(k)
    free_idx = [i for i, k in enumerate(names) if k not in fixed]
    free = [names[i] for i in free_idx]

    def full(p):
        q = dict(values)
        q.update(zip(free, p))
        return q

    def resid(p):
        return (g - g2_fit_model(x, full(p), model, emitters)[0]) / sigma

    def jac(p):
        d = g2_fit_model(x, full(p), model, emitters)[1]
        return -np.column_stack([d[k] for k in free]) / sigma[:, None]

    def valid(p):
        q = full(p)
        return q["norm"] > 0 and all(q[k] > 0 for k in names if k.startswith("tau"))

    p0 = np.array([values[k] for k in free])
    state = levenberg_marquardt(resid, jac, p0, valid=valid, max_iter=max_iter)
    if reweight:
        # see fit_lorentzian: refit with the first solution's Poisson variance
        nf = hist.meta["norm_factor"]
        model_g = g2_fit_model(x, full(state.p), model, emitters)[0]
        sigma = np.sqrt(np.maximum(model_g * nf, 1.0)) / nf
        state = levenberg_marquardt(resid, jac, state.p, valid=valid, max_iter=max_iter)
    to_si = {k: _unit(k) for k in names}

    def predict(tt, params):
        q = {k: v / _unit(k) for k, v in params.items()}
        return g2_fit_model(np.atleast_1d(tt) / _NS, q, model, emitters)[0]

    def grad(tt, params):
        q = {k: v / _unit(k) for k, v in params.items()}
        d = g2_fit_model(np.atleast_1d(tt) / _NS, q, model, emitters)[1]
        return np.column_stack([d[k] / _unit(k) for k in free])

    settings = {"model": model, "emitters": emitters, "fixed": {k: float(v) for k, v in fixed.items()},
                "tau_range": tau_range, "bin_width": hist.bin_width, "n": int(x.size),
                "reweight": reweight}
    res = _finish(state, jac(state.p), names, free_idx, x.size, to_si, f"g2-{model}",
                  fixed, settings, predict, grad)
    res.settings["emitters"] = emitters
    return res


def fitted_g2_zero(fit: FitResult):
    """g2(0) of the fitted curve with its 1-sigma uncertainty."""
    return float(fit.predict(0.0)[0]), float(fit.predict_sigma(0.0)[0])


def fitted_dip_fwhm(fit: FitResult, baseline_window=(20e-9, 40e-9), window=100e-9, step=8e-12):
    """Dip FWHM of the fitted curve, with sigma by propagating the covariance.

    The width's gradient with respect to the free parameters is taken by
    central differences of 1e-4 sigma.
    """
    n = int(round(window / step))
    tau = np.arange(-n, n + 1) * step

    def width(params):
        return dip_fwhm(tau, fit._predict(tau, params), baseline_window)

    w0 = width(fit.params)
    grad = []
    for k in fit.free:
        h = 1e-4 * fit.sigmas[k] if fit.sigmas[k] > 0 else 1e-6 * max(abs(fit.params[k]), 1e-12)
        up = dict(fit.params, **{k: fit.params[k] + h})
        dn = dict(fit.params, **{k: fit.params[k] - h})
        grad.append((width(up) - width(dn)) / (2 * h))
    grad = np.array(grad)
    return w0, float(math.sqrt(max(grad @ fit.covariance @ grad, 0.0)))
