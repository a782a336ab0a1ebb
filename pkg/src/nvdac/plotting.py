"""Deterministic SVG figures (no timestamps, fixed element ids)."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import numpy as np
from matplotlib import rc_context
from matplotlib.figure import Figure

from .analysis import FitResult, damped_cosine, exponential, lorentzian_dips

_RC = {
    "svg.hashsalt": "nvdac",
    "svg.fonttype": "path",
    "font.size": 9,
    "axes.linewidth": 0.8,
    "lines.linewidth": 1.2,
    "lines.markersize": 3,
    "figure.figsize": (5.0, 3.4),
}

# x-axis scaling for the units used in the CSV files
_X_UNITS = {
    "Hz": [(1e9, "GHz"), (1e6, "MHz"), (1e3, "kHz"), (1, "Hz")],
    "s": [(1, "s"), (1e-3, "ms"), (1e-6, "μs"), (1e-9, "ns")],
}


def _scale(x, unit):
    m = float(np.max(np.abs(x))) if len(x) else 1.0
    for factor, name in _X_UNITS[unit]:
        if m >= factor:
            return factor, name
    return _X_UNITS[unit][-1]


def fit_curve(fit: FitResult, x):
    p = fit.params
    if fit.model.startswith("lorentzian"):
        n = (len(p) - 1) // 3
        return lorentzian_dips(x, p["baseline"], [p[f"x0_{i + 1}"] for i in range(n)],
                               [p[f"fwhm_{i + 1}"] for i in range(n)],
                               [p[f"depth_{i + 1}"] for i in range(n)])
    if fit.model == "damped_cosine":
        return damped_cosine(x, p["amplitude"], p["frequency"], p["decay"], p["phase"], p["offset"])
    if fit.model == "exponential":
        return exponential(x, p["amplitude"], p["decay"], p["offset"])
    raise ValueError(f"no curve for model {fit.model!r}")


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})


def plot_trace(trace, path, fit: FitResult | None = None, title: str = "",
               x_unit: str | None = None, ylabel: str = "normalized counts") -> None:
    """Data with error bars and an optional fitted curve."""
    x_unit = x_unit or ("s" if trace.mode in _TIME_MODES else "Hz")
    with rc_context(_RC):
        fig = Figure()
        ax = fig.add_subplot(111)
        k, name = _scale(trace.x, x_unit)
        ax.errorbar(trace.x / k, trace.y, yerr=trace.sigma if trace.weighted else None,
                    fmt="o", ms=2.5, lw=0.6, color="#2b5d8c", ecolor="#9db4cc", label="simulated")
        if fit is not None:
            xx = np.linspace(trace.x[0], trace.x[-1], 800)
            ax.plot(xx / k, fit_curve(fit, xx), color="#c0392b", label="fit")
            ax.legend(frameon=False)
        ax.set_xlabel(("frequency" if x_unit == "Hz" else "time") + f" ({name})")
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        _save(fig, path)


def plot_traces(traces, labels, path, x_unit: str = "Hz", ylabel: str = "normalized counts",
                title: str = "") -> None:
    """Several traces on shared axes, offset-free."""
    with rc_context(_RC):
        fig = Figure()
        ax = fig.add_subplot(111)
        k, name = _scale(np.concatenate([t.x for t in traces]), x_unit)
        for t, lab in zip(traces, labels):
            ax.plot(t.x / k, t.y, "o-", ms=2, lw=0.8, label=lab)
        ax.set_xlabel(("frequency" if x_unit == "Hz" else "time") + f" ({name})")
        ax.set_ylabel(ylabel)
        ax.legend(frameon=False)
        if title:
            ax.set_title(title)
        _save(fig, path)


def plot_trend(pressures, values, sigmas, slope, intercept, path, ylabel: str, title: str = "") -> None:
    """Values against pressure with the regression line; values in Hz, shown in MHz."""
    with rc_context(_RC):
        fig = Figure()
        ax = fig.add_subplot(111)
        p = np.asarray(pressures, float)
        ax.errorbar(p, np.asarray(values) / 1e6, yerr=np.asarray(sigmas) / 1e6, fmt="o",
                    color="#2b5d8c", capsize=2)
        pp = np.linspace(min(p.min(), 0), p.max() * 1.05, 50)
        ax.plot(pp, (intercept + slope * pp) / 1e6, color="#c0392b",
                label=f"slope {slope / 1e3:+.2f} kHz/GPa")
        ax.set_xlabel("pressure (GPa)")
        ax.set_ylabel(ylabel + " (MHz)")
        ax.legend(frameon=False)
        if title:
            ax.set_title(title)
        _save(fig, path)


def plot_curve(x, y, path, xlabel: str, ylabel: str, title: str = "") -> None:
    with rc_context(_RC):
        fig = Figure()
        ax = fig.add_subplot(111)
        ax.plot(x, y, "o-", color="#2b5d8c")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        _save(fig, path)


_TIME_MODES = {"rabi_e", "rabi_n", "fid_n", "t1_e"}
