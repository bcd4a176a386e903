"""
Command-line front end.

    nvhom run hom --preset paper-fig3d --out out/fig3d
    nvhom run my_config.yaml --seed 5
    nvhom presets [--show NAME]
    nvhom validate my_config.yaml
    nvhom correlate clicks.npz --bin-width 0.064 --window 100

Exit status: 0 success, 2 configuration error, 3 runtime or validity error.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .config import SCENARIOS, dump_config, load_config
from .errors import ConfigError, NotFoundError, NvHomError
from .mc import ClickStream
from .pipelines import run_config, write_outputs
from .presets import PRESETS, get_preset
from .svg import Series, plot
from .tcspc import CorrelatorConfig, correlate, rebin

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _fail(code, msg):
    print(msg, file=sys.stderr)
    return code


def _resolve(args):
    """RunConfig from the positional target and/or --preset, with overrides applied."""
    target, preset = args.target, args.preset
    if target is not None and target not in SCENARIOS:
        if not os.path.exists(target):
            raise ConfigError(f"{target!r} is neither a scenario {list(SCENARIOS)} nor a file")
        if preset:
            raise ConfigError("give either a config file or --preset, not both")
        cfg = load_config(target)
    elif preset:
        try:
            cfg = get_preset(preset, scenario=target)
        except NotFoundError as exc:
            raise ConfigError(str(exc), "preset") from None
        if target is not None and cfg.scenario != target:
            raise ConfigError(f"preset {preset!r} is a {cfg.scenario!r} scenario, not {target!r}",
                              "preset")
    else:
        raise ConfigError("nothing to run: give a config file or --preset")
    overrides = {"seed": args.seed, "duration": args.duration, "output_dir": args.out}
    if any(v is not None for v in overrides.values()):
        cfg = cfg.replace(**overrides)
    return cfg


def cmd_run(args):
    try:
        cfg = _resolve(args)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, f"config error: {exc}")
    try:
        result = run_config(cfg)
        write_outputs(result, cfg, cfg.output_dir, svg=not args.no_svg)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, f"config error [{cfg.scenario}]: {exc}")
    except (NvHomError, ValueError, ArithmeticError) as exc:
        return _fail(EXIT_RUNTIME, f"runtime error [{cfg.scenario}]: {type(exc).__name__}: {exc}")
    print(result.summary)
    return EXIT_OK


def cmd_presets(args):
    if args.show:
        if args.show not in PRESETS:
            return _fail(EXIT_CONFIG, f"config error: unknown preset {args.show!r}")
        sys.stdout.write(dump_config(get_preset(args.show), fmt=args.format))
        return EXIT_OK
    width = max(len(n) for n in PRESETS)
    for name, p in PRESETS.items():
        scen = p["config"]["scenario"]
        targets = ", ".join(f"{k}={v[0]:g}" + (f"±{v[1]:g}" if v[1] else "")
                            for k, v in p["targets"].items())
        print(f"{name:<{width}}  {scen:<11}  {p['summary']}  [{targets}]")
    return EXIT_OK


def cmd_validate(args):
    try:
        cfg = load_config(args.config)
    except OSError as exc:
        return _fail(EXIT_CONFIG, f"config error: {exc}")
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, f"config error: {exc}")
    print(f"ok: scenario={cfg.scenario} seed={cfg.seed} output_dir={cfg.output_dir}")
    return EXIT_OK


def cmd_correlate(args):
    try:
        ccfg = CorrelatorConfig(args.bin_width * 1e-9, args.window * 1e-9, args.normalization)
        if args.stream.endswith(".npz"):
            stream = ClickStream.load_npz(args.stream)
        else:
            stream = ClickStream.load_csv(args.stream, duration=args.duration)
    except (OSError, KeyError) as exc:
        return _fail(EXIT_CONFIG, f"config error: cannot read {args.stream}: {exc}")
    except (ConfigError, ValueError) as exc:
        return _fail(EXIT_CONFIG, f"config error: {exc}")
    try:
        hist = correlate(stream, ccfg)
        if args.rebin > 1:
            hist = rebin(hist, args.rebin)
    except (NvHomError, ValueError) as exc:
        return _fail(EXIT_RUNTIME, f"runtime error [correlate]: {exc}")
    os.makedirs(args.out, exist_ok=True)
    hist.to_csv(os.path.join(args.out, "histogram.csv"))
    hist.write_header(os.path.join(args.out, "histogram.json"))
    if not args.no_svg:
        sel = np.abs(hist.tau) <= min(50e-9, args.window * 1e-9)
        plot([Series(hist.tau[sel] * 1e9, hist.g2[sel], "g2", "points", yerr=hist.g2_err[sel])],
             os.path.join(args.out, "histogram.svg"), title="Correlation histogram",
             xlabel="tau (ns)", ylabel="g2(tau)")
    mid = hist.counts.size // 2
    print(f"coincidences={int(hist.counts.sum())} g2(0)={hist.g2[mid]:.3f} "
          f"rate_C={hist.rate_C:.1f}/s rate_D={hist.rate_D:.1f}/s")
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="nvhom", description="Remote two-photon interference toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario from a config file or a preset")
    r.add_argument("target", nargs="?", help=f"config file or scenario ({', '.join(SCENARIOS)})")
    r.add_argument("--preset", help="built-in parameter set (see 'presets')")
    r.add_argument("--seed", type=int, help="override the RNG seed")
    r.add_argument("--out", help="output directory (overrides output_dir)")
    r.add_argument("--duration", type=float, help="override the simulated time in s")
    r.add_argument("--no-svg", action="store_true", help="skip SVG plots")
    r.set_defaults(func=cmd_run)

    p = sub.add_parser("presets", help="list built-in presets")
    p.add_argument("--show", metavar="NAME", help="print the config of one preset")
    p.add_argument("--format", choices=("yaml", "json"), default="yaml")
    p.set_defaults(func=cmd_presets)

    v = sub.add_parser("validate", help="check a config file without running it")
    v.add_argument("config")
    v.set_defaults(func=cmd_validate)

    c = sub.add_parser("correlate", help="histogram an offline click stream (.npz or .csv)")
    c.add_argument("stream")
    c.add_argument("--bin-width", type=float, default=0.064, help="bin width in ns")
    c.add_argument("--window", type=float, default=100.0, help="half window in ns")
    c.add_argument("--normalization", choices=("rate-product", "tail-average"),
                   default="rate-product")
    c.add_argument("--rebin", type=int, default=1)
    c.add_argument("--duration", type=float, help="acquisition time in s (CSV without header)")
    c.add_argument("--out", default="out/correlate")
    c.add_argument("--no-svg", action="store_true")
    c.set_defaults(func=cmd_correlate)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
