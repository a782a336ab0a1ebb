"""Curve fitting and extraction of physical parameters from spectra and traces."""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.optimize import least_squares
from scipy.signal import find_peaks, peak_widths

from .data import Trace
from .errors import (
    InitializationError,
    ModelMismatchError,
    UnderdeterminedError,
    ValidationError,
)
from .spinops import GAMMA_E, NV_AXES, FieldVector, NVParams, odmr_lines

MAX_ITER = 500


class Measured(NamedTuple):
    value: float
    sigma: float


class PlausibilityWarning(UserWarning):
    pass


@dataclass
class FitResult:
    params: dict
    sigmas: dict
    covariance: np.ndarray
    reduced_chi2: float
    converged: bool
    iterations: int
    model: str = ""
    flags: list = field(default_factory=list)
    weighted: bool = True

    def __getitem__(self, name):
        return Measured(self.params[name], self.sigmas[name])

    def as_dict(self) -> dict:
        return {
            "model": self.model,
            "params": {k: float(v) for k, v in self.params.items()},
            "sigmas": {k: float(v) for k, v in self.sigmas.items()},
            "covariance": np.asarray(self.covariance, float).tolist(),
            "reduced_chi2": float(self.reduced_chi2),
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "weighted": bool(self.weighted),
            "flags": list(self.flags),
        }


def _covariance(jac, chi2_red, weighted):
    # pseudo-inverse through the SVD guards against rank-deficient Jacobians
    _, s, vt = np.linalg.svd(jac, full_matrices=False)
    tol = np.finfo(float).eps * max(jac.shape) * (s[0] if len(s) else 0)
    s_inv = np.where(s > tol, 1.0 / np.where(s > tol, s, 1.0), 0.0)
    cov = (vt.T * s_inv**2) @ vt
    if not weighted:
        cov = cov * chi2_red
    return 0.5 * (cov + cov.T)


def _least_squares(resid, p0, names, scale, shift, n_data, weighted, model,
                   method="lm", bounds=None):
    """Fit in the scaled coordinates u = (p - shift) / scale and map back."""
    scale = np.asarray(scale, float)
    shift = np.asarray(shift, float)
    u0 = (np.asarray(p0, float) - shift) / scale

    def f(u):
        return resid(shift + scale * u)

    kw = dict(method=method, max_nfev=MAX_ITER, xtol=1e-12, ftol=1e-12, gtol=1e-12)
    if bounds is not None:
        lo = (np.asarray(bounds[0], float) - shift) / scale
        hi = (np.asarray(bounds[1], float) - shift) / scale
        kw["bounds"] = (lo, hi)
        pad = 1e-9 * np.maximum(1.0, np.where(np.isfinite(hi - lo), hi - lo, 1.0))
        u0 = np.clip(u0, np.where(np.isfinite(lo), lo + pad, lo), np.where(np.isfinite(hi), hi - pad, hi))
    res = least_squares(f, u0, **kw)
    p = shift + scale * res.x
    dof = max(n_data - len(p), 1)
    chi2_red = float(2 * res.cost / dof)
    converged = res.status > 0
    if converged:
        cov_u = _covariance(res.jac, chi2_red, weighted)
        cov = cov_u * np.outer(scale, scale)
        sig = np.sqrt(np.clip(np.diag(cov), 0, None))
    else:
        cov = np.full((len(p), len(p)), np.nan)
        sig = np.full(len(p), np.nan)
    return FitResult(
        params=dict(zip(names, p)),
        sigmas=dict(zip(names, sig)),
        covariance=cov,
        reduced_chi2=chi2_red,
        converged=converged,
        iterations=int(res.nfev),
        model=model,
        weighted=weighted,
    )


def _weights(trace: Trace):
    if trace.weighted:
        return trace.sigma, True
    return np.ones_like(trace.y), False


def moving_average(y, window: int = 5) -> np.ndarray:
    if window <= 1 or len(y) < window:
        return np.asarray(y, float).copy()
    pad = window // 2
    yp = np.pad(np.asarray(y, float), pad, mode="edge")
    return np.convolve(yp, np.ones(window) / window, mode="valid")


# ----------------------------------------------------------------------------
# Lorentzian dips

def lorentzian_dips(x, baseline, centers, fwhms, depths) -> np.ndarray:
    x = np.asarray(x, float)
    y = np.full_like(x, baseline, dtype=float)
    for x0, w, a in zip(centers, fwhms, depths):
        hw2 = (0.5 * w) ** 2
        y = y - a * hw2 / ((x - x0) ** 2 + hw2)
    return y


def _dip_names(n):
    names = ["baseline"]
    for i in range(1, n + 1):
        names += [f"x0_{i}", f"fwhm_{i}", f"depth_{i}"]
    return names


def find_dips(trace: Trace, window: int = 5, min_prominence: float | None = None):
    """Indices of local minima of the smoothed trace ranked by prominence."""
    ys = moving_average(trace.y, window)
    if min_prominence is None:
        noise = np.median(trace.sigma) if trace.weighted else 0.0
        # 8 sigma of the smoothed noise: 5 sigma still lets ~1 bump per 800 points through
        min_prominence = max(8 * noise / math.sqrt(window), 1e-12 * max(abs(ys).max(), 1e-300))
    idx, props = find_peaks(-ys, prominence=min_prominence)
    order = np.argsort(props["prominences"])[::-1]
    return idx[order], props["prominences"][order], ys


def count_dips(trace: Trace, window: int = 5, min_prominence: float | None = None,
               rel_prominence: float = 0.05) -> int:
    """Number of resolved dips; ignores dips shallower than ``rel_prominence`` of the deepest."""
    idx, prom, _ = find_dips(trace, window, min_prominence)
    if len(prom) == 0:
        return 0
    return int(np.sum(prom >= rel_prominence * prom[0]))


def _init_dips(trace: Trace, n_dips: int):
    idx, prom, ys = find_dips(trace)
    if len(idx) < n_dips:
        raise InitializationError(
            f"requested {n_dips} dips but only {len(idx)} minima were detected"
        )
    idx = np.sort(idx[:n_dips])
    baseline = float(np.percentile(ys, 90))
    widths = peak_widths(-ys, idx, rel_height=0.5)[0]
    dx = np.median(np.diff(trace.x))
    p = [baseline]
    for i, w in zip(idx, widths):
        p += [trace.x[i], max(w * dx, 2 * dx), max(baseline - ys[i], 1e-12)]
    return p


def fit_lorentzian(spec: Trace, n_dips: int = 1, init=None) -> FitResult:
    """Sum of ``n_dips`` Lorentzian dips on a flat baseline."""
    if n_dips < 1:
        raise ValidationError("n_dips must be >= 1")
    need = 5 * (3 * n_dips + 1)
    if len(spec) < need:
        raise ValidationError(f"{n_dips} dips need at least {need} points, got {len(spec)}")
    p0 = list(init) if init is not None else _init_dips(spec, n_dips)
    if len(p0) != 3 * n_dips + 1:
        raise ValidationError("init must hold baseline then (x0, fwhm, depth) per dip")
    sigma, weighted = _weights(spec)
    x, y = spec.x, spec.y

    def resid(p):
        c, w, a = p[1::3], p[2::3], p[3::3]
        return (lorentzian_dips(x, p[0], c, w, a) - y) / sigma

    span = x[-1] - x[0]
    amp = max(np.ptp(y), 1e-12)
    scale, shift = [amp], [p0[0]]
    for i in range(n_dips):
        c, w, a = p0[1 + 3 * i: 4 + 3 * i]
        scale += [span * 1e-3, max(abs(w), span * 1e-4), max(abs(a), amp * 1e-3)]
        shift += [c, 0.0, 0.0]
    res = _least_squares(resid, p0, _dip_names(n_dips), scale, shift, len(x), weighted,
                         f"lorentzian:{n_dips}")
    return _sort_dips(res, n_dips)


def _sort_dips(res: FitResult, n: int) -> FitResult:
    keys = [(res.params[f"x0_{i}"], i) for i in range(1, n + 1)]
    order = [i for _, i in sorted(keys)]
    names = _dip_names(n)
    old_idx = {k: j for j, k in enumerate(names)}
    new_params, new_sig, perm = {"baseline": res.params["baseline"]}, {"baseline": res.sigmas["baseline"]}, [0]
    for new, old in enumerate(order, start=1):
        for base in ("x0", "fwhm", "depth"):
            v = res.params[f"{base}_{old}"]
            if base == "fwhm":
                v = abs(v)
            new_params[f"{base}_{new}"] = v
            new_sig[f"{base}_{new}"] = res.sigmas[f"{base}_{old}"]
            perm.append(old_idx[f"{base}_{old}"])
    res.params, res.sigmas = new_params, new_sig
    res.covariance = res.covariance[np.ix_(perm, perm)]
    return res


def dip_centers(res: FitResult) -> list[float]:
    n = (len(res.params) - 1) // 3
    return [res.params[f"x0_{i}"] for i in range(1, n + 1)]


# ----------------------------------------------------------------------------
# time-domain fits

def damped_cosine(t, amplitude, frequency, decay, phase, offset):
    return offset + amplitude * np.exp(-np.asarray(t) / decay) * np.cos(
        2 * math.pi * frequency * np.asarray(t) + phase)


def dominant_frequency(t, y) -> float:
    """Peak of the zero-padded periodogram of the mean-removed trace."""
    t = np.asarray(t, float)
    y = np.asarray(y, float) - np.mean(y)
    if np.allclose(y, 0, atol=1e-15 * max(1.0, np.abs(y).max())):
        raise InitializationError("trace is flat: no dominant frequency")
    dt = np.median(np.diff(t))
    nfft = 1 << int(math.ceil(math.log2(len(y) * 16)))
    spec = np.abs(np.fft.rfft(y * np.hanning(len(y)), nfft))
    freqs = np.fft.rfftfreq(nfft, dt)
    spec[0] = 0
    k = int(np.argmax(spec))
    floor = np.median(spec[1:])
    if k == 0 or spec[k] < 3 * floor:
        raise InitializationError("no dominant frequency in trace")
    return float(freqs[k])


def fit_damped_cosine(trace: Trace, init=None, decay_bound: float | None = None) -> FitResult:
    """offset + A exp(-t/T) cos(2 pi f t + phi); T is capped at ``decay_bound``."""
    t, y = trace.x, trace.y
    span = t[-1] - t[0]
    t_max = decay_bound if decay_bound is not None else 100 * span
    sigma, weighted = _weights(trace)
    if init is None:
        f0 = dominant_frequency(t, y)
        off0 = float(np.mean(y))
        amp0 = float(np.std(y) * math.sqrt(2))
        # phase from projection onto the trial tone
        z = np.sum((y - off0) * np.exp(-2j * math.pi * f0 * t))
        ph0 = float(-np.angle(z))
        init = [amp0, f0, min(span / 2, 0.5 * t_max), ph0, off0]
    names = ["amplitude", "frequency", "decay", "phase", "offset"]

    def resid(p):
        return (damped_cosine(t, *p) - y) / sigma

    amp = max(abs(init[0]), 1e-12)
    scale = [amp, max(init[1] * 1e-3, 1 / span * 1e-3), span, 1.0, amp]
    shift = [0.0, init[1], 0.0, 0.0, init[4]]
    dt = np.median(np.diff(t))
    lo = [-np.inf, 0.0, dt * 0.1, -np.inf, -np.inf]
    hi = [np.inf, np.inf, t_max, np.inf, np.inf]
    best = None
    for ph in (init[3], init[3] + math.pi / 2, init[3] - math.pi / 2):
        p0 = list(init)
        p0[3] = ph
        r = _least_squares(resid, p0, names, scale, shift, len(t), weighted, "damped_cosine",
                           method="trf", bounds=(lo, hi))
        if best is None or (r.converged and r.reduced_chi2 < best.reduced_chi2) or not best.converged:
            best = r
    if best.params["amplitude"] < 0:
        best.params["amplitude"] *= -1
        best.params["phase"] += math.pi
    best.params["phase"] = (best.params["phase"] + math.pi) % (2 * math.pi) - math.pi
    if best.params["decay"] >= 0.99 * t_max:
        best.flags.append("decay_at_bound")
    return best


def exponential(t, amplitude, decay, offset):
    return offset + amplitude * np.exp(-np.asarray(t) / decay)


def fit_exponential(trace: Trace, init=None, fix_offset: float | None = None) -> FitResult:
    """offset + A exp(-t/T); pass ``fix_offset`` to hold the asymptote fixed."""
    t, y = trace.x, trace.y
    span = max(t[-1] - t[0], 1e-300)
    sigma, weighted = _weights(trace)
    flags = []
    if init is None:
        ys = moving_average(y, 5)
        k = max(1, len(y) // 10)
        off0 = float(np.mean(ys[-k:])) if fix_offset is None else fix_offset
        a0 = float(ys[0] - off0)
        target = off0 + a0 / math.e
        if a0 != 0:
            below = np.nonzero((ys - target) * np.sign(a0) <= 0)[0]
            t0 = float(t[below[0]] - t[0]) if len(below) else span
        else:
            t0 = span / 3
        init = [a0, max(t0, span / 50), off0]
    if np.ptp(y) == 0 or (trace.weighted and np.ptp(y) < 2 * np.median(trace.sigma) and
                          abs(init[0]) < 2 * np.median(trace.sigma)):
        flags.append("decay_unidentifiable")
    dt = np.median(np.diff(t)) if len(t) > 1 else span
    t_max = 100 * span
    amp = max(abs(init[0]), np.ptp(y), 1e-12)
    if fix_offset is None:
        names = ["amplitude", "decay", "offset"]

        def resid(p):
            return (exponential(t, *p) - y) / sigma

        p0, scale, shift = init, [amp, span, amp], [0.0, 0.0, init[2]]
        lo, hi = [-np.inf, dt * 0.01, -np.inf], [np.inf, t_max, np.inf]
    else:
        names = ["amplitude", "decay"]

        def resid(p):
            return (exponential(t, p[0], p[1], fix_offset) - y) / sigma

        p0, scale, shift = init[:2], [amp, span], [0.0, 0.0]
        lo, hi = [-np.inf, dt * 0.01], [np.inf, t_max]
    res = _least_squares(resid, p0, names, scale, shift, len(t), weighted, "exponential",
                         method="trf", bounds=(lo, hi))
    if fix_offset is not None:
        res.params["offset"] = fix_offset
        res.sigmas["offset"] = 0.0
    if res.params["decay"] >= 0.99 * t_max:
        flags.append("decay_at_bound")
    res.flags += flags
    return res


# ----------------------------------------------------------------------------
# extraction and trends

def _measured(v) -> Measured:
    if isinstance(v, Measured):
        return v
    if isinstance(v, (tuple, list)):
        return Measured(float(v[0]), float(v[1]))
    return Measured(float(v), 0.0)


def extract_qa(f_rf0, f_rf1, b, gamma_n: float) -> tuple[Measured, Measured]:
    """|Q| and |A_par| from the two NMR lines and the ODMR-measured field.

    f_RF0 = |Q| + gamma_n B and f_RF1 = |Q| + |A_par| + gamma_n B.
    """
    f0, f1, bb = _measured(f_rf0), _measured(f_rf1), _measured(b)
    q = Measured(abs(f0.value - gamma_n * bb.value), math.hypot(f0.sigma, gamma_n * bb.sigma))
    a = Measured(abs(f1.value - f0.value), math.hypot(f0.sigma, f1.sigma))
    if not 1e6 <= a.value <= 3e6:
        warnings.warn(f"|A_par| = {a.value:.4g} Hz is outside [1, 3] MHz", PlausibilityWarning,
                      stacklevel=2)
    return q, a


@dataclass(frozen=True)
class ExtractionRecord:
    pressure: float
    f_rf0: Measured
    f_rf1: Measured
    q_abs: Measured
    a_par_abs: Measured
    fwhm0: Measured
    fwhm1: Measured

    COLUMNS = ("pressure_gpa", "f_rf0_hz", "f_rf0_sigma", "f_rf1_hz", "f_rf1_sigma",
               "q_abs_hz", "q_abs_sigma", "a_par_abs_hz", "a_par_abs_sigma",
               "fwhm0_hz", "fwhm0_sigma", "fwhm1_hz", "fwhm1_sigma")

    def row(self) -> list[float]:
        out = [self.pressure]
        for m in (self.f_rf0, self.f_rf1, self.q_abs, self.a_par_abs, self.fwhm0, self.fwhm1):
            out += [m.value, m.sigma]
        return out


def records_to_csv(records) -> str:
    lines = [",".join(ExtractionRecord.COLUMNS)]
    lines += [",".join(repr(float(v)) for v in r.row()) for r in records]
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class TrendResult:
    slope: float
    slope_sigma: float
    intercept: float
    intercept_sigma: float
    reduced_chi2: float
    weighted: bool


def linear_trend(records) -> TrendResult:
    """Weighted straight-line fit to (x, value, sigma) or (x, Measured) records."""
    rows = []
    for r in records:
        if len(r) == 2:
            x, m = r
            m = _measured(m)
            rows.append((float(x), m.value, m.sigma))
        else:
            rows.append(tuple(float(v) for v in r))
    if len(rows) < 3:
        raise ValidationError(f"linear_trend needs at least 3 points, got {len(rows)}")
    rows.sort()
    x, y, s = (np.array(c) for c in zip(*rows))
    weighted = bool(np.all(s > 0))
    w = 1 / s**2 if weighted else np.ones_like(x)
    sw, sx, sy = w.sum(), (w * x).sum(), (w * y).sum()
    sxx, sxy = (w * x * x).sum(), (w * x * y).sum()
    det = sw * sxx - sx * sx
    if det <= 0:
        raise ValidationError("linear_trend needs at least two distinct x values")
    slope = (sw * sxy - sx * sy) / det
    intercept = (sxx * sy - sx * sxy) / det
    var_slope, var_int = sw / det, sxx / det
    chi2 = float((w * (y - intercept - slope * x) ** 2).sum() / (len(x) - 2))
    if not weighted:
        var_slope *= chi2
        var_int *= chi2
    return TrendResult(slope, math.sqrt(var_slope), intercept, math.sqrt(var_int), chi2, weighted)


# ----------------------------------------------------------------------------
# field inversion

def _symmetry_group():
    """Orthogonal maps permuting the NV axes up to sign (the 48-element O_h)."""
    mats = []
    a = NV_AXES
    for perm in itertools.permutations(range(4)):
        for signs in itertools.product((1, -1), repeat=4):
            src = a[:3]
            dst = np.array([signs[i] * a[perm[i]] for i in range(3)])
            r = np.linalg.solve(src, dst).T
            if not np.allclose(r @ r.T, np.eye(3), atol=1e-9):
                continue
            if not np.allclose(r @ a[3], signs[3] * a[perm[3]], atol=1e-9):
                continue
            if not any(np.allclose(r, m) for m in mats):
                mats.append(r)
    return mats


_GROUP = None


def canonical_field(b: FieldVector) -> FieldVector:
    """Representative of the symmetry class: theta in [0, pi/2], axis 1 closest, smallest phi."""
    global _GROUP
    if _GROUP is None:
        _GROUP = _symmetry_group()
    v = b.vector
    if b.magnitude == 0:
        return FieldVector(0.0, 0.0, 0.0)
    best = None
    for r in _GROUP:
        c = FieldVector.from_vector(r @ v)
        key = (round(c.theta, 9), round(c.phi, 9))
        if best is None or key < best[0]:
            best = (key, c)
    return best[1]


@dataclass
class FieldFit:
    field: FieldVector
    sigma_magnitude: float
    sigma_theta: float
    sigma_phi: float
    residual_rms: float
    axis: int | None = None
    flags: list = field(default_factory=list)


def _match_residual(pred, obs, observed_only: bool = False):
    pred = np.sort(pred)
    obs = np.sort(obs)
    if len(obs) == len(pred):
        return pred - obs
    # degenerate lines: every observed line to its nearest prediction and back
    d1 = [obs[i] - pred[np.argmin(np.abs(pred - obs[i]))] for i in range(len(obs))]
    if observed_only:
        return np.array(d1)
    d2 = [p - obs[np.argmin(np.abs(obs - p))] for p in pred]
    return np.array(d1 + d2)


_WIDE = 30.0  # robust-loss scale of the first field-fit pass, in linewidths


def fit_field_from_odmr(centers, d_gs: float, gamma_e: float = GAMMA_E,
                        linewidth: float = 1e6) -> FieldFit:
    """Least-squares (B, theta, phi) reproducing the observed ODMR line centres."""
    obs = np.sort(np.asarray(centers, float))
    p = NVParams(d_gs=d_gs, gamma_e=gamma_e, check_ranges=False)
    if len(obs) >= 1 and np.all(np.abs(obs - d_gs) < linewidth):
        return FieldFit(FieldVector(0.0), 0.0, math.nan, math.nan,
                        float(np.sqrt(np.mean((obs - d_gs) ** 2))), None, ["orientation_undefined"])
    if len(obs) < 4:
        raise UnderdeterminedError(f"need at least 4 resolved ODMR centres, got {len(obs)}")
    if len(obs) > 8:
        raise ValidationError("at most 8 ODMR centres are possible")

    # with fewer centres than lines some lines are merged or too weak to see, so
    # only the observed centres are matched and a Cauchy loss tames merged ones
    robust = len(obs) < 8

    def resid(v):
        return _match_residual(np.array(odmr_lines(p, v)), obs, robust) / linewidth

    b0 = (obs[-1] - obs[0]) / (2 * gamma_e)
    grid = []
    for scale in (0.7, 0.85, 1.0, 1.15):
        for th in np.radians(np.arange(0, 91, 7.5)):
            for ph in np.radians(np.arange(0, 360, 15)):
                v0 = scale * b0 * np.array(
                    [math.sin(th) * math.cos(ph), math.sin(th) * math.sin(ph), math.cos(th)])
                r = resid(v0)
                grid.append((float(np.sum(np.log1p((r / _WIDE) ** 2)) if robust else r @ r), v0))
    grid.sort(key=lambda g: g[0])
    sol = None
    for _, v0 in grid[:40 if robust else 80]:
        if robust:
            # continuation: a wide loss scale finds the basin, the narrow one sharpens it
            res = least_squares(resid, v0, loss="cauchy", f_scale=_WIDE, x_scale=max(b0, 1.0))
            res = least_squares(resid, res.x, loss="cauchy", x_scale=max(b0, 1.0), xtol=1e-14,
                                ftol=1e-14)
        else:
            res = least_squares(resid, v0, method="lm", x_scale=max(b0, 1.0), xtol=1e-14, ftol=1e-14)
        if sol is None or res.cost < sol.cost:
            sol = res
        if sol.cost < 1e-12:
            break
    fun = sol.fun
    rms = float(np.sqrt(np.mean(fun ** 2)) * linewidth)
    typical = float(np.sqrt(np.median(fun ** 2)) * linewidth)
    if typical > 5 * linewidth:
        raise ModelMismatchError(f"ODMR centres inconsistent with any field (rms {rms:.3g} Hz)")
    fv = FieldVector.from_vector(sol.x)
    canon = canonical_field(fv)
    # uncertainties of (B, theta, phi) from the spherical Jacobian
    jac = sol.jac * linewidth
    try:
        cov_v = np.linalg.pinv(jac.T @ jac) * max(rms**2, 1e-30)
    except np.linalg.LinAlgError:
        cov_v = np.full((3, 3), np.nan)
    rot = _rotation_between(fv.vector, canon.vector)
    cov_c = rot @ cov_v @ rot.T
    sb, sth, sph = _spherical_sigmas(canon, cov_c)
    flags = []
    axis = None
    if canon.theta < math.radians(0.1):
        axis = 1
        flags.append("aligned")
    return FieldFit(canon, sb, sth, sph, rms, axis, flags)


def _rotation_between(a, b):
    global _GROUP
    if _GROUP is None:
        _GROUP = _symmetry_group()
    for r in _GROUP:
        if np.allclose(r @ a, b, atol=1e-6 * max(np.linalg.norm(a), 1)):
            return r
    return np.eye(3)


def _spherical_sigmas(fv: FieldVector, cov):
    b, th, ph = fv.magnitude, fv.theta, fv.phi
    if b == 0:
        return 0.0, math.nan, math.nan
    er = np.array([math.sin(th) * math.cos(ph), math.sin(th) * math.sin(ph), math.cos(th)])
    et = np.array([math.cos(th) * math.cos(ph), math.cos(th) * math.sin(ph), -math.sin(th)])
    ep = np.array([-math.sin(ph), math.cos(ph), 0.0])
    sb = math.sqrt(max(er @ cov @ er, 0))
    sth = math.sqrt(max(et @ cov @ et, 0)) / b
    sph = math.sqrt(max(ep @ cov @ ep, 0)) / (b * math.sin(th)) if math.sin(th) > 1e-12 else math.nan
    return sb, sth, sph


def spectrum_contrast(spec: Trace, fit: FitResult | None = None) -> float:
    """Dip depth over baseline; from ``fit`` when given, else from the smoothed data."""
    if fit is not None:
        n = (len(fit.params) - 1) // 3
        depth = max(fit.params[f"depth_{i}"] for i in range(1, n + 1))
        return float(depth / fit.params["baseline"])
    ys = moving_average(spec.y, 5)
    baseline = float(np.percentile(ys, 90))
    if baseline == 0:
        return 0.0
    return float(max(baseline - ys.min(), 0.0) / baseline)
