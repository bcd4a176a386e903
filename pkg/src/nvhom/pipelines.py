"""
Scenario pipelines behind ``nvhom run``.

Each runner takes a validated :class:`~nvhom.config.RunConfig` and returns a
:class:`RunResult` holding a one-line summary, a JSON-serializable result
dictionary, CSV tables and SVG plots. Nothing here touches the file system;
:func:`write_outputs` does.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import budget as bud
from . import stark
from .config import MHZ, NS, RunConfig
from .errors import NvHomError
from .fitting import fit_g2, fit_lorentzian, fitted_dip_fwhm, fitted_g2_zero
from .mc import hbt_batches, hom_batches, simulate_ple
from .svg import Series, plot
from .tcspc import correlate_batches, rebin

__all__ = ["RunResult", "run_config", "write_outputs", "noise_contrast"]


@dataclass
class RunResult:
    summary: str
    results: dict
    tables: dict = field(default_factory=dict)  # name -> (header, rows)
    plots: dict = field(default_factory=dict)  # name -> svg text
    text: str = ""  # optional human-readable report


def _pm(v, s, digits=2, scale=1.0):
    return f"{v * scale:.{digits}f}±{s * scale:.{digits}f}"


def _measured(v, s):
    return {"value": float(v), "sigma": float(s)}


# ---------------------------------------------------------------- correlation


def noise_contrast(dyns, dets):
    """(1 - b_C)(1 - b_D) for uncorrelated noise fractions b at each detector.

    Each detector sees half of every emitter's collected flux times its
    efficiency, plus its own dark and background rates.
    """
    signal = sum(d.collected_rate() for d in dyns) / 2.0
    out = 1.0
    for det in dets:
        s = det.efficiency * signal
        n = det.noise_rate
        out *= s / (s + n) if s + n > 0 else 0.0
    return out


def _fit_fixed(cfg: RunConfig, fit_opts, contrast_noise):
    fixed = {}
    c = fit_opts["contrast"]
    if c == "noise":
        fixed["contrast"] = contrast_noise
    elif c != "free":
        fixed["contrast"] = float(c)
    n = fit_opts["norm"]
    if n == "auto":
        # rate-product normalization has a known asymptote; tail-average does not
        if cfg.correlator().normalization == "rate-product":
            fixed["norm"] = 1.0
    elif n != "free":
        fixed["norm"] = float(n)
    return fixed


def _hist_table(hist, fit, window_ns=None):
    rows = []
    pred = fit.predict(hist.tau)
    for t, c, g, e, p in zip(hist.tau, hist.counts, hist.g2, hist.g2_err, pred):
        if window_ns is not None and abs(t) > window_ns * NS:
            continue
        rows.append((int(round(t / 1e-12)), int(c), float(g), float(e), float(p)))
    return ("tau_ps", "counts", "g2", "g2_err", "g2_fit"), rows


def _g2_plot(hist, fit, title, window_ns=50.0):
    sel = np.abs(hist.tau) <= window_ns * NS
    t = hist.tau[sel] / NS
    fine = np.linspace(-window_ns, window_ns, 1001) * NS
    return plot([
        Series(t, hist.g2[sel], "data", "points", yerr=hist.g2_err[sel]),
        Series(fine / NS, fit.predict(fine), "fit", "line", color="#000000"),
    ], title=title, xlabel="tau (ns)", ylabel="g2(tau)", hlines=[(0.5, "4,3")])


def run_hom(cfg: RunConfig) -> RunResult:
    pair = cfg.pair()
    dyn1, dyn2 = cfg.dynamics()
    dets = cfg.detectors()
    ccfg = cfg.correlator()
    fopt = cfg.fit_options()
    hopt = cfg.hom_options()
    pols = ["perpendicular", "parallel"] if hopt["polarization"] == "both" else [hopt["polarization"]]
    contrast = noise_contrast((dyn1, dyn2), dets)
    fixed = _fit_fixed(cfg, fopt, contrast)
    res = {"scenario": "hom", "seed": cfg.seed, "duration_s": cfg.duration,
           "interference_amplitude_xi": pair.xi, "noise_contrast": contrast, "fixed": fixed,
           "polarizations": {}}
    out = RunResult("", res)
    parts = []
    g0s = {}
    for pol in pols:
        streams = hom_batches(pair, dyn1, dyn2, dets, cfg.duration, cfg.seed,
                              batch_duration=hopt["batch_duration"], polarization=pol,
                              pairing_window=hopt["pairing_window"],
                              max_occupancy=hopt["max_occupancy"])
        hist = correlate_batches(streams, ccfg)
        h = rebin(hist, fopt["rebin"])
        fit = fit_g2(h, "cross", fixed=fixed, pair=pair, emitters=fopt["emitters"],
                     tau_range=fopt["tau_range"], free=() if "contrast" in fixed else ("contrast",))
        g0 = fitted_g2_zero(fit)
        w = fitted_dip_fwhm(fit, fopt["baseline_window"])
        key = "par" if pol == "parallel" else "perp"
        g0s[key] = g0
        res["polarizations"][pol] = {
            "g2_zero": _measured(*g0),
            "dip_fwhm_ns": _measured(w[0] / NS, w[1] / NS),
            "fit": fit.to_dict(),
            "rate_C": hist.rate_C,
            "rate_D": hist.rate_D,
            "coincidences": int(hist.counts.sum()),
            "bin_width_ps": int(round(h.bin_width / 1e-12)),
        }
        out.tables[f"hom_{pol}.csv"] = _hist_table(h, fit)
        out.plots[f"hom_{pol}.svg"] = _g2_plot(h, fit, f"HOM cross-correlation ({pol})")
        parts.append(f"g2_{key}(0)={_pm(*g0)} dip_fwhm_{key}={_pm(*w, 2, 1 / NS)} ns")
    if len(g0s) == 2:
        eta = bud.visibility(g0s["perp"], g0s["par"])
        res["visibility"] = _measured(*eta)
        parts.append(f"visibility={_pm(*eta)}")
    out.summary = " ".join(parts)
    return out


def run_autocorr(cfg: RunConfig) -> RunResult:
    (em,) = cfg.emitters()
    (dyn,) = cfg.dynamics()
    dets = cfg.detectors()
    fopt = cfg.fit_options()
    fixed = _fit_fixed(cfg, fopt, noise_contrast((dyn,), dets))
    hist = correlate_batches(hbt_batches(em, dyn, dets, cfg.duration, cfg.seed,
                                         batch_duration=cfg.batch_duration()), cfg.correlator())
    h = rebin(hist, fopt["rebin"])
    fit = fit_g2(h, "auto", fixed=fixed, tau_range=fopt["tau_range"],
                 free=() if "contrast" in fixed else ("contrast",))
    g0 = fitted_g2_zero(fit)
    w = fitted_dip_fwhm(fit, fopt["baseline_window"])
    name = cfg.emitter_names()[0]
    res = {"scenario": "autocorr", "emitter": name, "seed": cfg.seed, "duration_s": cfg.duration,
           "g2_zero": _measured(*g0), "dip_fwhm_ns": _measured(w[0] / NS, w[1] / NS),
           "fit": fit.to_dict(), "rate_C": hist.rate_C, "rate_D": hist.rate_D,
           "coincidences": int(hist.counts.sum())}
    out = RunResult(f"{name} g2(0)={_pm(*g0)} dip_fwhm={_pm(*w, 2, 1 / NS)} ns", res)
    out.tables["autocorr.csv"] = _hist_table(h, fit)
    out.plots["autocorr.svg"] = _g2_plot(h, fit, f"Autocorrelation {name}")
    return out


# ------------------------------------------------------------------ spectra


def run_ple(cfg: RunConfig) -> RunResult:
    ems = cfg.emitters()
    names = cfg.emitter_names()
    p = cfg.ple_options()
    rates = p["peak_rate"] if isinstance(p["peak_rate"], list) else [p["peak_rate"]] * len(ems)
    children = np.random.SeedSequence(cfg.seed).spawn(len(ems))
    res = {"scenario": "ple", "seed": cfg.seed, "emitters": {}}
    series, cols, parts, centers = [], [], [], []
    for name, em, r, ss in zip(names, ems, rates, children):
        # each emitter has its own sideband detector; the laser scan is shared
        spec = simulate_ple(em, p["scan"], p["dwell"], r, ss,
                            background_rate=p["background_rate"], line=p["line"])
        fit = fit_lorentzian(spec)
        c, w = fit.params["center"], fit.params["fwhm"]
        sc, sw = fit.sigmas["center"], fit.sigmas["fwhm"]
        centers.append((c, sc))
        res["emitters"][name] = {"center_MHz": _measured(c / MHZ, sc / MHZ),
                                 "fwhm_MHz": _measured(w / MHZ, sw / MHZ), "fit": fit.to_dict()}
        parts.append(f"fwhm_{name}={_pm(w, sw, 1, 1 / MHZ)} MHz")
        rate = spec.counts / spec.dwell
        series.append(Series(spec.freq / MHZ, rate, name, "points"))
        series.append(Series(spec.freq / MHZ, fit.predict(spec.freq) / spec.dwell, "", "line"))
        cols.append(spec.counts)
    if len(centers) >= 2:
        d = centers[0][0] - centers[1][0]
        sd = math.hypot(centers[0][1], centers[1][1])
        res["detuning_MHz"] = _measured(d / MHZ, sd / MHZ)
        parts.append(f"detuning={_pm(d, sd, 1, 1 / MHZ)} MHz")
    freq = np.asarray(p["scan"]) / MHZ
    rows = [(float(f), *(int(c[i]) for c in cols)) for i, f in enumerate(freq)]
    out = RunResult(" ".join(parts), res)
    out.tables["ple.csv"] = (("freq_MHz", *(f"counts_{n}" for n in names)), rows)
    for i in range(0, len(series), 2):
        series[i + 1].color = series[i].color = ("#2e8b57", "#d98c1f", "#1f5fa8")[(i // 2) % 3]
    out.plots["ple.svg"] = plot(series, title="PLE spectra", xlabel="laser detuning (MHz)",
                                ylabel="counts/s")
    return out


def run_tuning(cfg: RunConfig) -> RunResult:
    nv1, nv2 = cfg.emitters()
    s = cfg.stark_options()
    p = cfg.ple_options()
    resp = stark.calibrated_response(s["detuning_initial"], s["detuning_tuned"], s["v_tuned"],
                                     s["v_max"], s["field_max"], s["v_range"], s["perp_fraction"])
    idx = 0 if p["line"] == "Ex" else 1
    target = nv2.line(p["line"])
    base = (nv1.f_Ex, nv1.f_Ey)
    v_opt, resid = stark.tune_to_resonance(resp, base, target, p["line"])
    at_anchor = stark.transition_freqs(resp, base, s["v_tuned"])[idx] - target
    spectra = stark.simulate_tuning_scan(resp, nv1, nv2, s["scan_voltages"], p["scan"], p["dwell"],
                                         p["peak_rate"], cfg.seed, p["background_rate"], p["line"],
                                         s["display_offset"])
    res = {"scenario": "tuning-scan", "seed": cfg.seed,
           "slope_MHz_per_V": resp.slopes()[0] / MHZ,
           "field_at_v_max_MV_per_m": resp.field(s["v_max"]),
           "v_opt": v_opt, "residual_MHz": resid / MHZ,
           "detuning_initial_MHz": abs(nv1.line(p["line"]) - target) / MHZ,
           "detuning_at_v_tuned_MHz": abs(at_anchor) / MHZ}
    parts = [f"V_opt={v_opt:.3f} V residual={resid / MHZ:.1f} MHz",
             f"detuning@{s['v_tuned']:g}V={abs(at_anchor) / MHZ:.1f} MHz"]
    try:
        vc = stark.scan_crossing(spectra, nv1.sd_fwhm, target)
        res["scan_crossing_V"] = vc
        parts.append(f"scan_crossing={vc:.2f} V")
    except NvHomError as exc:
        res["scan_crossing_V"] = None
        res["scan_crossing_error"] = str(exc)
    series, index = [], []
    out = RunResult(" ".join(parts), res)
    for i, spec in enumerate(spectra):
        name = f"scan_{i:02d}.csv"
        index.append({"file": name, "V": float(spec.meta["V"]),
                      "nv1_line_MHz": spec.meta["nv1_line"] / MHZ,
                      "display_offset": spec.meta["display_offset"]})
        out.tables[name] = (("freq_MHz", "counts", "expected"),
                            [(float(f / MHZ), int(c), float(e))
                             for f, c, e in zip(spec.freq, spec.counts, spec.expected)])
        series.append(Series(spec.freq / MHZ, spec.counts / spec.dwell + spec.meta["display_offset"],
                             "", "line"))
    res["scans"] = index
    out.plots["tuning_scan.svg"] = plot(series, title="PLE vs gate voltage (offset per step)",
                                        xlabel="laser detuning (MHz)", ylabel="counts/s + offset",
                                        height=640)
    return out


# ------------------------------------------------------------------ ledgers


def build_budget(opts):
    if "entries" in opts:
        return bud.NoiseBudget(opts["entries"], baseline=opts["baseline"])
    bg = bud.background_contribution(opts["signal_total"], opts["noise_total"])
    nb = bud.NoiseBudget([], baseline=opts["baseline"])
    nb.add("background+dark", bg if opts["derived_background"] else round(bg, 2))
    nb.add("spectral impurity", bud.spectral_impurity_contribution(opts["purity"],
                                                                  opts["impurity_mode"]))
    nb.add("fiber polarization", opts["polarization_delta"])
    return nb


def run_budget(cfg: RunConfig) -> RunResult:
    opts = cfg.budget_options()
    nb = build_budget(opts)
    total = bud.compose(nb)
    res = {"scenario": "budget", **nb.to_dict()}
    if "signal_total" in opts:
        res["background_exact"] = bud.background_contribution(opts["signal_total"],
                                                              opts["noise_total"])
    rows, running = [], nb.baseline
    for label, d in nb.contributions:
        running += d
        rows.append((label, d, running))
    out = RunResult(f"g2_par(0) budget total={total:.2f}", res)
    out.tables["budget.csv"] = (("label", "delta_g2", "running_total"), rows)
    steps = np.arange(len(rows) + 1)
    levels = [nb.baseline] + [r[2] for r in rows]
    out.plots["budget.svg"] = plot([Series(steps, levels, "running total", "points"),
                                    Series(steps, levels, "", "line")],
                                   title="g2_par(0) noise budget", xlabel="term",
                                   ylabel="g2_par(0)", hlines=[(0.5, "4,3")])
    out.text = nb.table()
    return out


def run_rate(cfg: RunConfig) -> RunResult:
    rc = cfg.rate_config()
    T = bud.entanglement_time(rc)
    alt = bud.entanglement_time(replace(rc, apply_overlap=not rc.apply_overlap))
    res = {"scenario": "rate", "entanglement_time_s": T,
           "with_overlap" if not rc.apply_overlap else "without_overlap": alt,
           "success_probability": rc.success_prefactor * rc.collection_efficiency ** 2}
    eff = np.linspace(0.5, 2.5, 41) * rc.collection_efficiency
    times = [bud.entanglement_time(replace(rc, collection_efficiency=float(e))) for e in eff]
    out = RunResult(f"entanglement_time={T:.3g} s", res)
    out.tables["rate.csv"] = (("collection_efficiency", "time_s"),
                              [(float(e), float(t)) for e, t in zip(eff, times)])
    out.plots["rate.svg"] = plot([Series(eff, times, "1/(R p eta^2)", "line")],
                                 title="Entanglement generation time", xlabel="collection efficiency",
                                 ylabel="time (s)")
    return out


RUNNERS = {"hom": run_hom, "autocorr": run_autocorr, "ple": run_ple, "tuning-scan": run_tuning,
           "budget": run_budget, "rate": run_rate}


def run_config(cfg: RunConfig) -> RunResult:
    return RUNNERS[cfg.scenario](cfg)


# ------------------------------------------------------------------ output


def _cell(v):
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else "nan"
    return str(v)


def write_outputs(result: RunResult, cfg: RunConfig, out_dir, svg=True):
    """Write results.json, config.yaml, CSV tables and SVG plots; returns the paths."""
    from .config import dump_config

    os.makedirs(out_dir, exist_ok=True)
    paths = []
    # the output location is not part of the run, so identical runs written
    # to different directories produce identical files
    run_cfg = cfg.to_dict()
    run_cfg.pop("output_dir", None)
    doc = {"summary": result.summary, "config": run_cfg, "results": result.results}
    p = os.path.join(out_dir, "results.json")
    with open(p, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")
    paths.append(p)
    p = os.path.join(out_dir, "config.yaml")
    with open(p, "w") as fh:
        fh.write(dump_config(cfg, output_dir=False))
    paths.append(p)
    for name, (header, rows) in sorted(result.tables.items()):
        p = os.path.join(out_dir, name)
        with open(p, "w") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(_cell(v) for v in row) + "\n")
        paths.append(p)
    if result.text:
        p = os.path.join(out_dir, "report.txt")
        with open(p, "w") as fh:
            fh.write(result.text + "\n")
        paths.append(p)
    if svg:
        for name, doc_svg in sorted(result.plots.items()):
            p = os.path.join(out_dir, name)
            with open(p, "w") as fh:
                fh.write(doc_svg)
            paths.append(p)
    return paths
