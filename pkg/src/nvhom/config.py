"""
Run configuration: parsing, validation and conversion to SI model objects.

A run is described by one YAML (or JSON) document. Quantities at this
boundary use lab units: ns for times, MHz for frequencies, V for voltages,
counts/s for rates and s for acquisition durations. The accessor methods
of :class:`RunConfig` return SI model objects.
"""

from __future__ import annotations

import copy
import json
import math
import re
from contextlib import contextmanager
from dataclasses import dataclass, field

import yaml

from .errors import ConfigError
from .mc import DetectorModel, EmissionDynamics
from .model import AutocorrParams, EmitterModel, PairConfig
from .tcspc import CorrelatorConfig

__all__ = ["RunConfig", "SCENARIOS", "load_config", "parse_config", "dump_config"]

NS = 1e-9
MHZ = 1e6

SCENARIOS = ("ple", "tuning-scan", "hom", "autocorr", "budget", "rate")
STOCHASTIC = {"ple", "tuning-scan", "hom", "autocorr"}

# sections each scenario needs
REQUIRED = {
    "ple": ("emitters", "ple"),
    "tuning-scan": ("emitters", "stark", "ple"),
    "hom": ("emitters", "dynamics", "detectors", "correlator", "hom"),
    "autocorr": ("emitters", "dynamics", "detectors", "correlator"),
    "budget": ("budget",),
    "rate": ("rate",),
}
SECTIONS = ("emitters", "dynamics", "detectors", "correlator", "stark", "budget", "rate", "ple",
            "hom", "hbt", "fit")
TOP_LEVEL = ("scenario", "seed", "duration", "output_dir", "description") + SECTIONS


class _Loader(yaml.SafeLoader):
    """SafeLoader that also reads exponent floats without a dot (1e6, 4e-05)."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"^[-+]?(?:[0-9][0-9_]*)(?:\.[0-9_]*)?[eE][-+]?[0-9]+$"),
    list("-+0123456789"))


def _line_index(text):
    """Map dotted key paths to 1-based line numbers of a YAML document."""
    index = {}
    try:
        root = yaml.compose(text, Loader=_Loader)
    except yaml.YAMLError:
        return index

    def walk(node, path):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                p = f"{path}.{k.value}" if path else str(k.value)
                index[p] = k.start_mark.line + 1
                walk(v, p)
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                p = f"{path}[{i}]"
                index[p] = v.start_mark.line + 1
                walk(v, p)

    if root is not None:
        walk(root, "")
    return index


@contextmanager
def _within(path):
    """Re-raise model-level errors under the config path ``path``."""
    try:
        yield
    except ConfigError as exc:
        if exc.field and (exc.field == path or exc.field.startswith((path + ".", path + "["))):
            raise
        msg = str(exc)
        if exc.field and msg.startswith(exc.field + ": "):
            msg = msg[len(exc.field) + 2:]
        sub = f"{path}.{exc.field}" if exc.field else path
        raise ConfigError(msg, sub) from None
    except ValueError as exc:
        raise ConfigError(str(exc), path) from None


def _num(section, key, path, default=None, lo=None, hi=None, lo_open=False, required=True):
    where = f"{path}.{key}" if path else key
    if key not in section or section[key] is None:
        if default is not None or not required:
            return default
        raise ConfigError("missing required field", where)
    v = section[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"expected a number, got {v!r}", where)
    v = float(v)
    if not math.isfinite(v):
        raise ConfigError("must be finite", where)
    if lo is not None and (v < lo or (lo_open and v == lo)):
        raise ConfigError(f"must be {'>' if lo_open else '>='} {lo:g}", where)
    if hi is not None and v > hi:
        raise ConfigError(f"must be <= {hi:g}", where)
    return v


def _choice(section, key, path, options, default):
    v = section.get(key, default)
    if v not in options:
        raise ConfigError(f"must be one of {list(options)}, got {v!r}", f"{path}.{key}")
    return v


def _mapping(cfg, key):
    v = cfg.get(key)
    if v is None:
        return {}
    if not isinstance(v, dict):
        raise ConfigError("expected a mapping", key)
    return v


@dataclass
class RunConfig:
    """Validated run description (boundary units, as written in the file)."""

    scenario: str
    seed: int | None = None
    duration: float | None = None
    output_dir: str = "out"
    description: str = ""
    sections: dict = field(default_factory=dict)
    source: str | None = None

    # ------------------------------------------------------------ parsing
    @classmethod
    def from_dict(cls, data, source=None):
        if not isinstance(data, dict):
            raise ConfigError("top level must be a mapping")
        unknown = sorted(set(data) - set(TOP_LEVEL))
        if unknown:
            raise ConfigError(f"unknown key (expected one of {list(TOP_LEVEL)})", unknown[0])
        scenario = data.get("scenario")
        if scenario is None:
            raise ConfigError("missing required field", "scenario")
        if scenario not in SCENARIOS:
            raise ConfigError(f"must be one of {list(SCENARIOS)}, got {scenario!r}", "scenario")
        seed = data.get("seed")
        if seed is None and scenario in STOCHASTIC:
            raise ConfigError(f"required for the stochastic scenario {scenario!r}", "seed")
        if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int) or seed < 0):
            raise ConfigError(f"must be a nonnegative integer, got {seed!r}", "seed")
        duration = data.get("duration")
        if scenario in ("hom", "autocorr"):
            duration = _num(data, "duration", "", lo=0, lo_open=True) if "duration" in data else None
            if duration is None:
                raise ConfigError("missing required field", "duration")
        elif duration is not None:
            duration = _num(data, "duration", "", lo=0, lo_open=True)
        for name in REQUIRED[scenario]:
            if data.get(name) is None:
                raise ConfigError(f"section required for scenario {scenario!r}", name)
        sections = {k: copy.deepcopy(data[k]) for k in SECTIONS if data.get(k) is not None}
        out = cls(scenario, seed, duration, str(data.get("output_dir", "out")),
                  str(data.get("description", "")), sections, source)
        out.validate()
        return out

    def to_dict(self):
        d = {"scenario": self.scenario}
        if self.description:
            d["description"] = self.description
        if self.seed is not None:
            d["seed"] = self.seed
        if self.duration is not None:
            d["duration"] = self.duration
        d["output_dir"] = self.output_dir
        for k in SECTIONS:
            if k in self.sections:
                d[k] = copy.deepcopy(self.sections[k])
        return d

    def replace(self, **changes):
        d = self.to_dict()
        d.update({k: v for k, v in changes.items() if v is not None})
        return RunConfig.from_dict(d, self.source)

    def validate(self):
        """Build every object the scenario needs; raises ConfigError on the first problem."""
        s = self.scenario
        if s in ("ple", "tuning-scan", "hom", "autocorr"):
            ems = self.emitters()
            need = {"hom": 2, "tuning-scan": 2, "autocorr": 1}.get(s)
            if need is not None and len(ems) != need:
                raise ConfigError(f"scenario {s!r} needs exactly {need} emitter(s), got {len(ems)}",
                                  "emitters")
        if s in ("hom", "autocorr"):
            self.dynamics()
            self.detectors()
            self.correlator()
            self.fit_options()
        if s == "hom":
            self.pair()
            self.hom_options()
        if s == "autocorr":
            self.batch_duration()
        if s in ("ple", "tuning-scan"):
            self.ple_options()
        if s == "tuning-scan":
            self.stark_options()
        if s == "budget":
            self.budget_options()
        if s == "rate":
            self.rate_config()
        return self

    # ------------------------------------------------------------ builders
    def emitters(self):
        raw = self.sections.get("emitters")
        if not isinstance(raw, list) or not raw:
            raise ConfigError("expected a nonempty list of emitters", "emitters")
        out = []
        for i, e in enumerate(raw):
            p = f"emitters[{i}]"
            if not isinstance(e, dict):
                raise ConfigError("expected a mapping", p)
            ac = e.get("autocorr", {"a": 0.0, "tau1": 12.0, "tau2": 100.0})
            if not isinstance(ac, dict):
                raise ConfigError("expected a mapping", f"{p}.autocorr")
            with _within(p):
                auto = AutocorrParams(_num(ac, "a", f"{p}.autocorr", lo=0),
                                      _num(ac, "tau1", f"{p}.autocorr", lo=0, lo_open=True) * NS,
                                      _num(ac, "tau2", f"{p}.autocorr", lo=0, lo_open=True) * NS)
                em = EmitterModel(
                    f_Ex=_num(e, "f_Ex", p) * MHZ,
                    f_Ey=_num(e, "f_Ey", p, default=e.get("f_Ex", 0.0) + 2000.0) * MHZ,
                    gamma=1.0 / (_num(e, "lifetime", p, default=12.0, lo=0, lo_open=True) * NS),
                    sd_fwhm=_num(e, "sd_fwhm", p, lo=0) * MHZ,
                    autocorr=auto,
                    spin_purity=_num(e, "spin_purity", p, default=1.0, lo=0, hi=1, lo_open=True),
                )
            out.append(em)
        return out

    def emitter_names(self):
        return [e.get("name", f"NV{i + 1}") for i, e in enumerate(self.sections["emitters"])]

    def dynamics(self):
        """EmissionDynamics per emitter, derived from autocorr unless given explicitly."""
        ems = self.emitters()
        raw = self.sections.get("dynamics")
        if isinstance(raw, dict):
            raw = [raw] * len(ems)
        if not isinstance(raw, list) or len(raw) != len(ems):
            raise ConfigError(f"expected one entry per emitter ({len(ems)})", "dynamics")
        out = []
        for i, (em, d) in enumerate(zip(ems, raw)):
            p = f"dynamics[{i}]"
            if not isinstance(d, dict):
                raise ConfigError("expected a mapping", p)
            with _within(p):
                if "pump_rate" in d:
                    dyn = EmissionDynamics(
                        pump_rate=_num(d, "pump_rate", p, lo=0) * MHZ,
                        gamma=em.gamma,
                        shelf_prob=_num(d, "shelf_prob", p, default=0.0, lo=0, hi=1),
                        shelf_lifetime=_num(d, "shelf_lifetime", p, default=300.0, lo=0,
                                            lo_open=True) * NS,
                        collection_efficiency=_num(d, "collection_efficiency", p, default=1.0,
                                                   lo=0, hi=1, lo_open=True),
                    )
                    if "collected_rate" in d:
                        dyn = dyn.with_collected_rate(_num(d, "collected_rate", p, lo=0,
                                                           lo_open=True))
                else:
                    dyn = EmissionDynamics.from_autocorr(em.autocorr, em.gamma)
                    dyn = dyn.with_collected_rate(_num(d, "collected_rate", p, lo=0, lo_open=True))
            out.append(dyn)
        return out

    def detectors(self):
        """(DetectorModel for output C, DetectorModel for output D)."""
        raw = self.sections.get("detectors")
        items = raw if isinstance(raw, list) else [raw, raw]
        if len(items) != 2:
            raise ConfigError("expected one mapping or a list of two", "detectors")
        out = []
        for i, d in enumerate(items):
            p = "detectors" if not isinstance(raw, list) else f"detectors[{i}]"
            if not isinstance(d, dict):
                raise ConfigError("expected a mapping", p)
            with _within(p):
                out.append(DetectorModel(
                    efficiency=_num(d, "efficiency", p, default=1.0, lo=0, hi=1),
                    dark_rate=_num(d, "dark_rate", p, default=0.0, lo=0),
                    background_rate=_num(d, "background_rate", p, default=0.0, lo=0),
                    jitter_sigma=_num(d, "jitter", p, default=0.05, lo=0) * NS,
                    dead_time=_num(d, "dead_time", p, default=0.0, lo=0) * NS,
                ))
        return tuple(out)

    def correlator(self):
        c = _mapping(self.sections, "correlator")
        with _within("correlator"):
            return CorrelatorConfig(
                bin_width=_num(c, "bin_width", "correlator", default=0.064, lo=0, lo_open=True) * NS,
                window=_num(c, "window", "correlator", default=100.0, lo=0, lo_open=True) * NS,
                normalization=_choice(c, "normalization", "correlator",
                                      ("rate-product", "tail-average"), "rate-product"),
            )

    def fit_options(self):
        f = _mapping(self.sections, "fit")
        rebin = f.get("rebin", 1)
        if isinstance(rebin, bool) or not isinstance(rebin, int) or rebin < 1:
            raise ConfigError("must be a positive integer", "fit.rebin")
        n_bins = self.correlator().n_bins
        if n_bins % rebin:
            raise ConfigError(f"must divide the {n_bins} histogram bins", "fit.rebin")
        contrast = f.get("contrast", "noise" if self.scenario == "hom" else "free")
        if isinstance(contrast, str):
            if contrast not in ("noise", "free"):
                raise ConfigError("must be 'noise', 'free' or a number", "fit.contrast")
        else:
            contrast = _num(f, "contrast", "fit", lo=0, hi=1)
        norm = f.get("norm", "auto")
        if isinstance(norm, str):
            if norm not in ("auto", "free"):
                raise ConfigError("must be 'auto', 'free' or a number", "fit.norm")
        else:
            norm = _num(f, "norm", "fit", lo=0, lo_open=True)
        tau_range = _num(f, "tau_range", "fit", required=False, lo=0, lo_open=True)
        return {
            "rebin": rebin,
            "emitters": _choice(f, "emitters", "fit", ("shared", "per-emitter"), "shared"),
            "contrast": contrast,
            "norm": norm,
            "tau_range": None if tau_range is None else tau_range * NS,
            "baseline_window": tuple(x * NS for x in f.get("baseline_window", (20.0, 40.0))),
        }

    def pair(self):
        ems = self.emitters()
        h = _mapping(self.sections, "hom")
        xi = _num(h, "xi", "hom", lo=0, hi=1)
        with _within("hom"):
            return PairConfig(ems[0], ems[1], xi)

    def hom_options(self):
        h = _mapping(self.sections, "hom")
        pol = h.get("polarization", "parallel")
        if pol not in ("parallel", "perpendicular", "both"):
            raise ConfigError("must be 'parallel', 'perpendicular' or 'both'", "hom.polarization")
        pw = _num(h, "pairing_window", "hom", required=False, lo=0, lo_open=True)
        return {
            "polarization": pol,
            "batch_duration": _num(h, "batch_duration", "hom", default=60.0, lo=0, lo_open=True),
            "max_occupancy": _num(h, "max_occupancy", "hom", default=0.01, lo=0, lo_open=True),
            "pairing_window": None if pw is None else pw * NS,
        }

    def batch_duration(self):
        a = _mapping(self.sections, "hbt")
        return _num(a, "batch_duration", "hbt", default=60.0, lo=0, lo_open=True)

    def ple_options(self):
        p = _mapping(self.sections, "ple")
        start = _num(p, "scan_start", "ple")
        stop = _num(p, "scan_stop", "ple")
        step = _num(p, "scan_step", "ple", lo=0, lo_open=True)
        if not stop > start:
            raise ConfigError("must exceed scan_start", "ple.scan_stop")
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        if n < 5:
            raise ConfigError("scan needs at least 5 points", "ple.scan_step")
        rates = p.get("peak_rate")
        if isinstance(rates, list):
            rates = [_num({"r": r}, "r", f"ple.peak_rate[{i}]", lo=0) for i, r in enumerate(rates)]
            if len(rates) != len(self.sections.get("emitters", [])):
                raise ConfigError("needs one entry per emitter", "ple.peak_rate")
        else:
            rates = _num(p, "peak_rate", "ple", lo=0)
        return {
            "scan": [(start + i * step) * MHZ for i in range(n)],
            "dwell": _num(p, "dwell", "ple", lo=0, lo_open=True),
            "peak_rate": rates,
            "background_rate": _num(p, "background_rate", "ple", default=0.0, lo=0),
            "line": _choice(p, "line", "ple", ("Ex", "Ey"), "Ex"),
        }

    def stark_options(self):
        s = _mapping(self.sections, "stark")
        v_range = s.get("v_range", [-30.0, 50.0])
        if not (isinstance(v_range, list) and len(v_range) == 2):
            raise ConfigError("expected [V_min, V_max]", "stark.v_range")
        v_range = (_num({"v": v_range[0]}, "v", "stark.v_range[0]"),
                   _num({"v": v_range[1]}, "v", "stark.v_range[1]"))
        if not v_range[0] < v_range[1]:
            raise ConfigError("must satisfy V_min < V_max", "stark.v_range")
        grid = s.get("scan_voltages")
        if not isinstance(grid, list) or len(grid) < 2:
            raise ConfigError("expected a list of at least two voltages", "stark.scan_voltages")
        grid = [_num({"v": v}, "v", f"stark.scan_voltages[{i}]", lo=v_range[0], hi=v_range[1])
                for i, v in enumerate(grid)]
        return {
            "detuning_initial": _num(s, "detuning_initial", "stark", lo=0) * MHZ,
            "detuning_tuned": _num(s, "detuning_tuned", "stark", lo=0) * MHZ,
            "v_tuned": _num(s, "v_tuned", "stark"),
            "v_max": _num(s, "v_max", "stark", default=50.0, lo=0, lo_open=True),
            "field_max": _num(s, "field_max", "stark", default=0.5, lo=0, lo_open=True),
            "perp_fraction": _num(s, "perp_fraction", "stark", default=0.0, lo=0, hi=1),
            "v_range": v_range,
            "scan_voltages": grid,
            "display_offset": _num(s, "display_offset", "stark", default=20e3, lo=0),
        }

    def budget_options(self):
        b = _mapping(self.sections, "budget")
        if "entries" in b:
            entries = b["entries"]
            if not isinstance(entries, list):
                raise ConfigError("expected a list of {label, delta}", "budget.entries")
            out = []
            for i, e in enumerate(entries):
                p = f"budget.entries[{i}]"
                if not isinstance(e, dict) or "label" not in e:
                    raise ConfigError("expected {label, delta}", p)
                out.append((str(e["label"]), _num(e, "delta", p, lo=0)))
            return {"entries": out, "baseline": _num(b, "baseline", "budget", default=0.0, lo=0)}
        signal = _num(b, "signal_total", "budget", lo=0, lo_open=True)
        noise = _num(b, "noise_total", "budget", lo=0, hi=signal)
        return {
            "signal_total": signal,
            "noise_total": noise,
            "purity": _num(b, "purity", "budget", default=1.0, lo=0, hi=1, lo_open=True),
            "impurity_mode": _choice(b, "impurity_mode", "budget", ("paper-ledger", "model"),
                                     "paper-ledger"),
            "polarization_delta": _num(b, "polarization_delta", "budget", default=0.0, lo=0),
            "derived_background": bool(b.get("derived_background", False)),
            "baseline": _num(b, "baseline", "budget", default=0.0, lo=0),
        }

    def rate_config(self):
        from .budget import RateConfig

        r = _mapping(self.sections, "rate")
        with _within("rate"):
            return self._rate(r, RateConfig)

    @staticmethod
    def _rate(r, RateConfig):
        return RateConfig(
            collection_efficiency=_num(r, "collection_efficiency", "rate", lo=0, hi=1),
            rep_rate=_num(r, "rep_rate", "rate", lo=0) * MHZ,
            linewidth=_num(r, "linewidth", "rate", default=50.0, lo=0) * MHZ,
            natural_linewidth=_num(r, "natural_linewidth", "rate", default=13.3, lo=0) * MHZ,
            success_prefactor=_num(r, "success_prefactor", "rate", default=0.5, lo=0, hi=1),
            apply_overlap=bool(r.get("apply_overlap", False)),
        )


def parse_config(text, source=None):
    """Parse YAML/JSON text into a validated RunConfig.

    ConfigError messages carry the file line of the offending field when it
    can be located.
    """
    try:
        data = yaml.load(text, Loader=_Loader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}: " if mark is not None else ""
        raise ConfigError(f"{where}cannot parse config ({getattr(exc, 'problem', exc)})") from None
    try:
        return RunConfig.from_dict(data, source)
    except ConfigError as exc:
        line = None
        if exc.field:
            index = _line_index(text)
            key = exc.field
            # fall back to the nearest enclosing entry that appears in the file
            while key and key not in index:
                key = re.sub(r"(\.[^.\[]+|\[\d+\])$", "", key) if re.search(r"[.\[]", key) else ""
            line = index.get(key)
        if line is not None:
            exc.args = (f"line {line}: {exc.args[0]}",)
            exc.line = line
        raise


def load_config(path):
    with open(path) as fh:
        text = fh.read()
    return parse_config(text, str(path))


def dump_config(cfg: RunConfig, fmt="yaml", output_dir=True):
    """Serialize ``cfg``; ``output_dir=False`` leaves out the output location."""
    d = cfg.to_dict()
    if not output_dir:
        d.pop("output_dir", None)
    if fmt == "json":
        return json.dumps(d, indent=2, sort_keys=False) + "\n"
    return yaml.safe_dump(d, sort_keys=False, default_flow_style=None)
