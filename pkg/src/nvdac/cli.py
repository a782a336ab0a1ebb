"""Command-line entry point: ``nvdac simulate | fit | pressure-series | reproduce | validate-config``.

Exit codes: 0 ok, 1 acceptance band failed or fit did not converge, 2 usage or parse error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

from . import pipeline, plotting
from .analysis import dip_centers
from .config import Config, load_config
from .data import CSVFormatError, read_csv, write_csv
from .errors import DSLSyntaxError, InitializationError, NVDACError
from .sequences import PRESETS, parse_sequence, run_sweep
from .sequences.engine import context_at

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

# headline parameter per fitted model: (parameter, label, scale, unit)
_HEADLINE = {
    "rabi_e": ("frequency", "Rabi frequency", 1e6, "MHz"),
    "rabi_n": ("frequency", "Rabi frequency", 1e3, "kHz"),
    "fid_n": ("decay", "T2n*", 1e-6, "us"),
    "t1_e": ("decay", "T1e", 1e-6, "us"),
    "nmr_pulsed_ms0": ("x0_1", "line centre", 1e6, "MHz"),
    "nmr_pulsed_ms1": ("x0_1", "line centre", 1e6, "MHz"),
    "nmr_cw": ("x0_1", "line centre", 1e6, "MHz"),
}


class _Usage(Exception):
    """Bad input detected by the CLI itself; maps to exit code 2."""


def _err(msg: str) -> None:
    print(f"nvdac: error: {msg}", file=sys.stderr)


def _config(path) -> Config:
    return Config() if path is None else load_config(path)


def _seeded(cfg: Config, seed) -> Config:
    cfg = cfg if seed is None else cfg.with_seed(seed)
    print(f"seed: {cfg.rng_seed}")
    return cfg


def _pressures(values) -> list[float]:
    out = []
    for v in values:
        for tok in v.replace(",", " ").split():
            try:
                out.append(float(tok))
            except ValueError:
                raise _Usage(f"bad pressure {tok!r}") from None
    return out


# ----------------------------------------------------------------------------
# commands

def cmd_simulate(args) -> int:
    cfg = _seeded(_config(args.config), args.seed)
    if args.sequence:
        try:
            with open(args.sequence, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise _Usage(f"cannot read sequence {args.sequence}: {exc.strerror}") from None
        try:
            seq = parse_sequence(text, name=os.path.splitext(os.path.basename(args.sequence))[0])
        except DSLSyntaxError as exc:
            raise _Usage(f"{args.sequence}: {exc}") from None
        ctx = cfg.context(args.pressure, ensemble=args.ensemble)
        trace = run_sweep(seq, ctx, args.workers, mode=seq.name)
        name, fit = seq.name, None
    else:
        name = args.preset
        kw = {"ensemble": True} if args.ensemble else {}
        _, ctx, trace = pipeline.simulate_preset(cfg, name, args.pressure, workers=args.workers, **kw)
        fit = pipeline.fit_trace(trace, pipeline.fit_model_for(name))
    out = args.out or f"{name}.csv"
    os.makedirs(os.path.dirname(os.path.abspath(out)), exist_ok=True)
    write_csv(trace, out)
    svg = os.path.splitext(out)[0] + ".svg"
    plotting.plot_trace(trace, svg, fit, title=f"{name}, {args.pressure:g} GPa")
    print(f"wrote {out}")
    print(f"wrote {svg}")
    if fit is not None:
        if name == "odmr_cw":
            centres = ", ".join(f"{c / 1e6:.3f}" for c in dip_centers(fit))
            print(f"dip centres (MHz): {centres}")
        else:
            key, label, scale, unit = _HEADLINE[name]
            print(f"{label} = {fit.params[key] / scale:.6g} ± {fit.sigmas[key] / scale:.2g} {unit}")
        if not fit.converged:
            print("warning: fit did not converge", file=sys.stderr)
    return EXIT_OK


def cmd_fit(args) -> int:
    try:
        trace = read_csv(args.input)
    except FileNotFoundError:
        raise _Usage(f"input not found: {args.input}") from None
    except CSVFormatError as exc:
        raise _Usage(f"{args.input}: {exc}") from None
    res = pipeline.fit_trace(trace, args.model)
    out = res.as_dict()
    out["seed"] = args.seed if args.seed is not None else 0
    if res.model.startswith("lorentzian"):
        out["centers"] = [float(c) for c in dip_centers(res)]
    json.dump(out, sys.stdout, indent=2)
    sys.stdout.write("\n")
    if not res.converged and not args.allow_nonconverged:
        _err("fit did not converge (use --allow-nonconverged to accept)")
        return EXIT_FAIL
    return EXIT_OK


def cmd_pressure_series(args) -> int:
    cfg = _seeded(_config(args.config), args.seed)
    pressures = _pressures(args.pressures)
    means = pipeline.series_means(cfg, pressures, args.workers)
    res = pipeline.series_from_means(means)
    files = pipeline.write_series(res, args.out)
    for r in res.records:
        print(f"{r.pressure:g} GPa: |Q| = {r.q_abs.value / 1e6:.6f} ± {r.q_abs.sigma / 1e3:.2f}e-3 MHz, "
              f"|A_par| = {r.a_par_abs.value / 1e6:.6f} ± {r.a_par_abs.sigma / 1e3:.2f}e-3 MHz")
    for label, t in (("d|Q|/dP", res.q_trend), ("d|A_par|/dP", res.a_trend)):
        print(f"{label} = {t.slope / 1e3:+.3f} ± {t.slope_sigma / 1e3:.3f} kHz/GPa "
              f"(reduced chi2 {t.reduced_chi2:.2f})")
    print(f"wrote {len(files)} files to {args.out}")
    return EXIT_OK


def cmd_reproduce(args) -> int:
    if args.figure not in pipeline.FIGURES:
        raise _Usage(f"unknown figure {args.figure!r}; valid ids: {', '.join(pipeline.FIGURES)}")
    cfg = _seeded(_config(args.config), args.seed)
    rep = pipeline.reproduce(args.figure, cfg, args.out, cfg.rng_seed, args.workers)
    for c in rep.checks:
        print(c.line())
    print(f"wrote {len(rep.files)} files to {args.out}")
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_validate_config(args) -> int:
    cfg = _seeded(load_config(args.config), args.seed)
    pm = cfg.pressure_model
    # exercising a context catches cross-field problems the parser cannot see
    context_at(pm.p_min, pm, field=cfg.field)
    print(f"config ok: {args.config}")
    return EXIT_OK


# ----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nvdac", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config=True, workers=True):
        if config:
            p.add_argument("--config", help="flat key = value config file (defaults built in)")
        p.add_argument("--seed", type=int, help="override rng_seed")
        if workers:
            p.add_argument("--workers", type=int, help="worker threads (capped by NVDAC_THREADS)")

    p = sub.add_parser("simulate", help="run a preset or a sequence file and write CSV + SVG")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", choices=PRESETS)
    src.add_argument("--sequence", help="sequence file in the text format")
    p.add_argument("--pressure", type=float, default=0.6, help="GPa (default 0.6)")
    p.add_argument("--out", help="CSV path; the SVG is written next to it")
    p.add_argument("--ensemble", action="store_true", help="average over the four NV orientations")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit a CSV trace, JSON result on stdout")
    p.add_argument("input")
    p.add_argument("--model", required=True, help="lorentzian:N | lorentzian:auto | damped_cosine | exponential")
    p.add_argument("--allow-nonconverged", action="store_true")
    common(p, config=False, workers=False)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("pressure-series", help="NMR pipeline over pressures with linear trends")
    p.add_argument("--pressures", nargs="+", default=[",".join(map(str, pipeline.SERIES_PRESSURES))],
                   help="GPa, space or comma separated")
    p.add_argument("--out", default="series", help="output directory")
    common(p)
    p.set_defaults(func=cmd_pressure_series)

    p = sub.add_parser("reproduce", help=f"reproduce one figure ({', '.join(pipeline.FIGURES)})")
    p.add_argument("figure")
    p.add_argument("--out", default=".", help="output directory")
    common(p)
    p.set_defaults(func=cmd_reproduce)

    p = sub.add_parser("validate-config", help="check a config file strictly")
    p.add_argument("config")
    common(p, config=False, workers=False)
    p.set_defaults(func=cmd_validate_config)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _Usage as exc:
        _err(str(exc))
        return EXIT_USAGE
    except InitializationError as exc:
        _err(f"fit failed: {exc}")
        return EXIT_FAIL
    except NVDACError as exc:
        # config, DSL, CSV, range and validation problems are all input errors
        _err(str(exc))
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
