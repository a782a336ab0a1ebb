"""End-to-end experiments: simulate, fit, extract, regress and check against bands."""
from __future__ import annotations

import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import plotting
from .analysis import (
    ExtractionRecord,
    FitResult,
    Measured,
    TrendResult,
    count_dips,
    dip_centers,
    extract_qa,
    fit_damped_cosine,
    fit_exponential,
    fit_lorentzian,
    linear_trend,
    records_to_csv,
)
from .config import Config
from .data import Trace, write_csv
from .dynamics import RWAWarning
from .errors import ValidationError
from .sequences import mean_sweep, preset, run_sweep, sample_sweep
from .sequences.engine import SimulationContext

FIGURES = ("2b", "2c", "3c", "3d", "4a", "4b", "4c")
SERIES_PRESSURES = (0.6, 6.9, 13.5, 16.6)

# default operating pressure of each figure
_FIG_PRESSURE = {"2b": 0.6, "2c": 16.6, "3c": 0.6, "4a": 0.6, "4b": 0.6, "4c": 0.6}


@dataclass(frozen=True)
class Check:
    """One headline number against its acceptance band."""

    name: str
    value: float
    target: float
    tolerance: float
    unit: str = ""
    scale: float = 1.0

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.value) and abs(self.value - self.target) <= self.tolerance)

    def line(self) -> str:
        s, u = self.scale, self.unit
        return (f"{self.name} = {self.value / s:.6g} {u} (band {self.target / s:.6g} "
                f"± {self.tolerance / s:.3g} {u}) {'PASS' if self.passed else 'FAIL'}")


def fit_model_for(name: str) -> str:
    if name in ("rabi_e", "rabi_n", "fid_n"):
        return "damped_cosine"
    if name == "t1_e":
        return "exponential"
    if name == "odmr_cw":
        return "lorentzian:auto"
    return "lorentzian:1"


def fit_trace(trace: Trace, model: str) -> FitResult:
    """``model`` is lorentzian:N, lorentzian:auto, damped_cosine or exponential."""
    if model.startswith("lorentzian:"):
        n = model.split(":", 1)[1]
        if n == "auto":
            n_dips = max(1, count_dips(trace))
        else:
            try:
                n_dips = int(n)
            except ValueError:
                raise ValidationError(f"bad dip count in model {model!r}") from None
        return fit_lorentzian(trace, n_dips)
    if model == "damped_cosine":
        return fit_damped_cosine(trace)
    if model == "exponential":
        return fit_exponential(trace)
    raise ValidationError(f"unknown fit model {model!r}")


def context_for(cfg: Config, name: str, pressure: float, seed: int | None = None,
                **kw) -> SimulationContext:
    if name == "odmr_cw":
        kw.setdefault("ensemble", True)
    return cfg.context(pressure, seed, **kw)


def simulate_preset(cfg: Config, name: str, pressure: float, seed: int | None = None,
                    overrides: dict | None = None, workers: int | None = None, **ctx_kw):
    ctx = context_for(cfg, name, pressure, seed, **ctx_kw)
    seq = preset(name, ctx, overrides)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RWAWarning)
        trace = run_sweep(seq, ctx, workers, mode=name)
    return seq, ctx, trace


# ----------------------------------------------------------------------------
# pressure series

@dataclass
class SeriesMeans:
    """Noise-free ms0/ms1 sweeps per pressure, reusable across noise seeds."""

    cfg: Config
    pressures: tuple
    items: list = field(default_factory=list)  # (pressure, ctx, seq0, mean0, seq1, mean1)


@dataclass
class SeriesResult:
    records: list
    q_trend: TrendResult
    a_trend: TrendResult
    traces: list
    fits: list

    def trend_csv(self) -> str:
        lines = ["quantity,slope_hz_per_gpa,slope_sigma,intercept_hz,intercept_sigma,reduced_chi2"]
        for name, t in (("q_abs", self.q_trend), ("a_par_abs", self.a_trend)):
            lines.append(",".join([name] + [repr(float(v)) for v in (
                t.slope, t.slope_sigma, t.intercept, t.intercept_sigma, t.reduced_chi2)]))
        return "\n".join(lines) + "\n"


def series_means(cfg: Config, pressures=SERIES_PRESSURES, workers: int | None = None) -> SeriesMeans:
    pressures = tuple(float(p) for p in pressures)
    if len(pressures) < 3:
        raise ValidationError(f"a pressure series needs at least 3 pressures, got {len(pressures)}")
    for p in pressures:
        cfg.pressure_model.check(p)
    out = SeriesMeans(cfg, pressures)
    realistic = cfg.simulation.get("realistic_width", True)
    for p in pressures:
        out.items.append(_point_means(cfg.context(p, realistic_width=realistic), workers))
    return out


def extract_point(item, seed: int, k: int = 0):
    """Sample, fit and extract one pressure point; returns (record, traces, fits)."""
    p, ctx, s0, m0, s1, m1 = item
    # distinct but reproducible seeds per spectrum
    t0 = sample_sweep(m0, s0, ctx, seed=seed * 1000 + 2 * k, mode="nmr_pulsed_ms0")
    t1 = sample_sweep(m1, s1, ctx, seed=seed * 1000 + 2 * k + 1, mode="nmr_pulsed_ms1")
    f0 = fit_lorentzian(t0, 1)
    f1 = fit_lorentzian(t1, 1)
    c0 = Measured(f0.params["x0_1"], f0.sigmas["x0_1"])
    c1 = Measured(f1.params["x0_1"], f1.sigmas["x0_1"])
    q, a = extract_qa(c0, c1, Measured(ctx.field.magnitude, 0.0), ctx.params.gamma_n)
    rec = ExtractionRecord(
        p, c0, c1, q, a,
        Measured(f0.params["fwhm_1"], f0.sigmas["fwhm_1"]),
        Measured(f1.params["fwhm_1"], f1.sigmas["fwhm_1"]),
    )
    return rec, (t0, t1), (f0, f1)


def series_from_means(means: SeriesMeans, seed: int | None = None) -> SeriesResult:
    """Sample shot noise, fit both lines per pressure, extract |Q| and |A_par|, regress."""
    seed = means.cfg.rng_seed if seed is None else seed
    records, traces, fits = [], [], []
    for k, item in enumerate(means.items):
        rec, tr, ft = extract_point(item, seed, k)
        records.append(rec)
        traces.append(tr)
        fits.append(ft)
    q_trend = linear_trend([(r.pressure, r.q_abs) for r in records])
    a_trend = linear_trend([(r.pressure, r.a_par_abs) for r in records])
    return SeriesResult(records, q_trend, a_trend, traces, fits)


def series_checks(res: SeriesResult) -> list[Check]:
    return [
        Check("|dQ/dP|", abs(res.q_trend.slope), 3.5e3, 0.4e3, "kHz/GPa", 1e3),
        Check("|dA_par/dP|", abs(res.a_trend.slope), 4.9e3, 1.1e3, "kHz/GPa", 1e3),
    ]


def write_series(res: SeriesResult, outdir: str) -> list[str]:
    os.makedirs(outdir, exist_ok=True)
    paths = []
    for r, (t0, t1), (f0, f1) in zip(res.records, res.traces, res.fits):
        tag = f"{r.pressure:g}".replace(".", "p")
        for name, t, f in (("ms0", t0, f0), ("ms1", t1, f1)):
            csv = os.path.join(outdir, f"nmr_{name}_{tag}gpa.csv")
            write_csv(t, csv)
            plotting.plot_trace(t, csv[:-4] + ".svg", f, title=f"{r.pressure:g} GPa, {name}")
            paths += [csv, csv[:-4] + ".svg"]
    ext = os.path.join(outdir, "extraction.csv")
    with open(ext, "w", newline="\n") as fh:
        fh.write(records_to_csv(res.records))
    trend = os.path.join(outdir, "trend.csv")
    with open(trend, "w", newline="\n") as fh:
        fh.write(res.trend_csv())
    p = [r.pressure for r in res.records]
    plotting.plot_trend(p, [r.q_abs.value for r in res.records], [r.q_abs.sigma for r in res.records],
                        res.q_trend.slope, res.q_trend.intercept,
                        os.path.join(outdir, "trend_q.svg"), "|Q|")
    plotting.plot_trend(p, [r.a_par_abs.value for r in res.records],
                        [r.a_par_abs.sigma for r in res.records], res.a_trend.slope,
                        res.a_trend.intercept, os.path.join(outdir, "trend_a.svg"), "|A_par|")
    return paths + [ext, trend, os.path.join(outdir, "trend_q.svg"), os.path.join(outdir, "trend_a.svg")]


# ----------------------------------------------------------------------------
# figure reproduction

@dataclass
class Reproduction:
    figure: str
    checks: list
    files: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def _emit(trace, fit, outdir, stem, title=""):
    csv = os.path.join(outdir, stem + ".csv")
    write_csv(trace, csv)
    svg = os.path.join(outdir, stem + ".svg")
    plotting.plot_trace(trace, svg, fit, title=title)
    return [csv, svg]


def odmr_checks(fit: FitResult, ctx: SimulationContext, n_found: int) -> list[Check]:
    centers = sorted(dip_centers(fit))
    gamma_e = ctx.params.gamma_e
    split = centers[-1] - centers[0]
    return [
        Check("ODMR dip count", n_found, 4, 0),
        Check("outer splitting", split, 2 * gamma_e * ctx.field.magnitude, 1e6, "MHz", 1e6),
        Check("D centre", 0.5 * (centers[0] + centers[-1]), 3.116e9, 2e6, "GHz", 1e9),
    ]


def reproduce(fig: str, cfg: Config, outdir: str = ".", seed: int | None = None,
              workers: int | None = None) -> Reproduction:
    if fig not in FIGURES:
        raise ValidationError(f"unknown figure {fig!r}; valid: {', '.join(FIGURES)}")
    os.makedirs(outdir, exist_ok=True)
    stem = f"fig{fig}"
    if fig == "3d":
        res = series_from_means(series_means(cfg, SERIES_PRESSURES, workers), seed)
        files = write_series(res, os.path.join(outdir, stem + "_data"))
        plotting.plot_trend([r.pressure for r in res.records], [r.q_abs.value for r in res.records],
                            [r.q_abs.sigma for r in res.records], res.q_trend.slope,
                            res.q_trend.intercept, os.path.join(outdir, stem + ".svg"), "|Q|")
        ext = os.path.join(outdir, stem + ".csv")
        with open(ext, "w", newline="\n") as fh:
            fh.write(records_to_csv(res.records))
        return Reproduction(fig, series_checks(res), files + [ext, os.path.join(outdir, stem + ".svg")])

    p = _FIG_PRESSURE[fig]
    if fig == "2b":
        _, ctx, tr = simulate_preset(cfg, "rabi_e", p, seed, workers=workers)
        f = fit_damped_cosine(tr)
        checks = [Check("electron Rabi frequency", f.params["frequency"], 62e6, 0.005 * 62e6, "MHz", 1e6)]
        return Reproduction(fig, checks, _emit(tr, f, outdir, stem, "electron Rabi"))
    if fig == "2c":
        _, ctx, tr = simulate_preset(cfg, "odmr_cw", p, seed, workers=workers)
        n = count_dips(tr)
        f = fit_lorentzian(tr, 4)
        return Reproduction(fig, odmr_checks(f, ctx, n), _emit(tr, f, outdir, stem, "ODMR"))
    if fig == "3c":
        ctx = cfg.context(p, realistic_width=cfg.simulation.get("realistic_width", True))
        seed = cfg.rng_seed if seed is None else seed
        r, (t0, t1), (f0, f1) = extract_point(_point_means(ctx, workers), seed)
        files = _emit(t0, f0, outdir, stem, "m_S = 0") + _emit(t1, f1, outdir, stem + "_ms1", "m_S = -1")
        checks = [
            Check("|Q|", r.q_abs.value, 4.94e6, 10e3, "MHz", 1e6),
            Check("|A_par|", r.a_par_abs.value, 2.16e6, 10e3, "MHz", 1e6),
        ]
        return Reproduction(fig, checks, files)
    if fig == "4a":
        files, checks = [], []
        traces = []
        for rabi in (10e3, 25e3, 50e3):
            _, ctx, tr = simulate_preset(cfg, "rabi_n", p, seed, {"rabi": rabi}, workers)
            f = fit_damped_cosine(tr)
            traces.append(tr)
            tag = f"{int(rabi / 1e3)}khz"
            files += _emit(tr, f, outdir, f"{stem}_{tag}", f"RF Rabi {rabi / 1e3:g} kHz")
            checks.append(Check(f"nuclear Rabi / drive at {rabi / 1e3:g} kHz",
                                f.params["frequency"] / rabi, 1.0, 0.03))
        plotting.plot_traces(traces, [f"{r / 1e3:g} kHz" for r in (10e3, 25e3, 50e3)],
                             os.path.join(outdir, stem + ".svg"), "s")
        return Reproduction(fig, checks, files + [os.path.join(outdir, stem + ".svg")])
    if fig == "4b":
        _, ctx, tr = simulate_preset(cfg, "fid_n", p, seed, workers=workers)
        f = fit_damped_cosine(tr)
        checks = [Check("T2n*", f.params["decay"], 70e-6, 10e-6, "μs", 1e-6)]
        return Reproduction(fig, checks, _emit(tr, f, outdir, stem, "nuclear FID"))
    # 4c
    _, ctx, tr = simulate_preset(cfg, "t1_e", p, seed, workers=workers)
    f = fit_exponential(tr)
    checks = [Check("T1e", f.params["decay"], 254e-6, 31e-6, "μs", 1e-6)]
    return Reproduction(fig, checks, _emit(tr, f, outdir, stem, "electron T1"))


def _point_means(ctx, workers):
    s0 = preset("nmr_pulsed_ms0", ctx)
    s1 = preset("nmr_pulsed_ms1", ctx)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RWAWarning)
        return ctx.pressure, ctx, s0, mean_sweep(s0, ctx, workers), s1, mean_sweep(s1, ctx, workers)
