"""Evaluate pulse sequences against the open-system model."""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from threadpoolctl import threadpool_limits

from .. import dynamics as dyn
from ..data import Trace
from ..errors import ValidationError
from ..pressure import PressureModel, default_paper_model, params_at
from ..spinops import NV_AXES, FieldVector, NVParams, project_field
from .dsl import Pulse, PulseSequence


@dataclass(frozen=True)
class SimulationContext:
    """Everything a sweep point needs besides the sequence itself.

    ``field`` is the lab field in the frame of NV axis 1. Sequences address the
    axis-1 group unless ``ensemble`` is set, in which case the signal is the
    average over the four orientations (used for ODMR).
    ``extra_width`` (Hz FWHM) adds nuclear dephasing on top of t2n_star.
    """

    params: NVParams
    field: FieldVector
    optical: dyn.OpticalModel = dyn.OpticalModel()
    noise: dyn.NoiseModel = dyn.NoiseModel()
    pressure: float = float("nan")
    seed: int = 0
    extra_width: float = 0.0
    cw_pump_rate: float | None = 1e5
    cw_window: float = 1e-6
    ensemble: bool = False
    meta: dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        if self.extra_width < 0:
            raise ValidationError("extra_width must be >= 0")
        if self.cw_window <= 0:
            raise ValidationError("cw_window must be > 0")
        if self.cw_pump_rate is not None and self.cw_pump_rate < 0:
            raise ValidationError("cw_pump_rate must be >= 0")

    def replace(self, **kw) -> "SimulationContext":
        return replace(self, **kw)


def context_at(pressure: float, model: PressureModel | None = None, field_gauss: float = 460.0,
               field: FieldVector | None = None, realistic_width: bool = False, **kw) -> SimulationContext:
    """Context at one pressure. ``realistic_width`` adds the model's pressure-dependent width."""
    model = default_paper_model() if model is None else model
    p = params_at(model, pressure)
    b = FieldVector(field_gauss) if field is None else field
    if realistic_width:
        kw.setdefault("extra_width", model.width_at(pressure))
    return SimulationContext(p, b, pressure=float(pressure), **kw)


def max_workers(hint: int | None = None) -> int:
    cap = os.environ.get("NVDAC_THREADS")
    n = hint if hint is not None else (os.cpu_count() or 1)
    if cap:
        try:
            n = min(n, int(cap))
        except ValueError:
            raise ValidationError(f"NVDAC_THREADS must be an integer, got {cap!r}") from None
    return max(1, n)


# ----------------------------------------------------------------------------
# cached building blocks; all keys are immutable dataclasses

@lru_cache(maxsize=64)
def _pumped(optical, params, b, noise):
    return dyn.pumped_steady_state(optical, params, b, noise)


@lru_cache(maxsize=128)
def _laser_map(optical, params, b, noise, duration):
    h = dyn.full_hamiltonian(params, b)
    coll = dyn.optical_channels(optical, True) + dyn.noise_channels(noise, dyn.N_FULL, h=h)
    sup = dyn.liouvillian(h, coll)
    return dyn.propagator(sup, duration)


def _orientations(ctx: SimulationContext):
    """(weight, field in NV frame) pairs, merging orientations that see the same field."""
    if not ctx.ensemble:
        return [(1.0, ctx.field)]
    groups = {}
    for n in NV_AXES:
        fb = project_field(ctx.field, n)
        key = (round(fb.magnitude, 9), round(fb.theta, 12))
        w, _ = groups.get(key, (0.0, fb))
        groups[key] = (w + 0.25, fb)
    return list(groups.values())


def _q_sign(params):
    return 1.0 if params.q >= 0 else -1.0


# ----------------------------------------------------------------------------
# single points

def _pulsed_brightness(seq: PulseSequence, bindings, ctx: SimulationContext, b: FieldVector,
                       reference: bool = False):
    """Brightness and read window of the first read pulse.

    With ``reference`` every mw/rf pulse is replaced by free evolution of equal length.
    """
    opt, par, noise = ctx.optical, ctx.params, ctx.noise
    rho = _pumped(opt, par, b, noise)
    steady = True
    t = 0.0
    h9 = dyn.hamiltonian_for(par, b, dyn.N_GS)
    for pulse in seq.pulses:
        pl = pulse.resolved(bindings)
        if not pl.duration > 0:
            raise ValidationError(f"{pl.kind} duration must be > 0 after resolution")
        if pl.kind == "read":
            return dyn.brightness(rho, opt), pl.duration
        if pl.kind == "laser":
            if not steady:
                r21 = rho if rho.shape[0] == dyn.N_FULL else dyn.embed(rho)
                rho = dyn.apply_super(_laser_map(opt, par, b, noise, float(pl.duration)), r21)
        else:
            rho = dyn.settle(rho, opt)
            steady = False
            if pl.kind == "wait" or reference:
                rho = dyn.free_evolution(rho, h9, noise, pl.duration, extra_width=ctx.extra_width)
            else:
                drive = dyn.make_drive(h9, pl.kind, float(pl.frequency), pl.rabi, pl.phase,
                                       _q_sign(par))
                rho = dyn.coherent_pulse(rho, drive, pl.duration, noise, t0=t,
                                         extra_width=ctx.extra_width)
        t += pl.duration
    raise ValidationError("sequence has no read pulse")


def _cw_brightness(seq: PulseSequence, bindings, ctx: SimulationContext, b: FieldVector,
                   reference: bool = False):
    opt, par = ctx.optical, ctx.params
    laser = any(p.kind == "laser" for p in seq.pulses)
    rate = opt.pump_rate if ctx.cw_pump_rate is None else ctx.cw_pump_rate
    coll = dyn.optical_channels(opt, laser, rate)
    h = dyn.full_hamiltonian(par, b)
    coll += dyn.noise_channels(ctx.noise, dyn.N_FULL, ctx.extra_width, h=h)
    drives = [] if reference else [p.resolved(bindings) for p in seq.pulses if p.kind in ("mw", "rf")]
    if drives:
        d = drives[0]
        rd = dyn.make_drive(h, d.kind, float(d.frequency), d.rabi, d.phase, _q_sign(par))
        rho = rd.steady_state(coll)
    else:
        rho = dyn.steady_state(dyn.liouvillian(h, coll, sparse=True))
    reads = [p for p in seq.pulses if p.kind == "read" and p.duration is not None]
    window = float(reads[0].resolved(bindings).duration) if reads else ctx.cw_window
    return dyn.brightness(rho, opt), window


def mean_point(seq: PulseSequence, bindings, ctx: SimulationContext,
               reference: bool = False) -> tuple[float, float]:
    """Noise-free normalised signal and the photon budget per shot at the reference level."""
    fn = _cw_brightness if seq.cw else _pulsed_brightness
    total = 0.0
    window = None
    for w, b in _orientations(ctx):
        y, window = fn(seq, bindings, ctx, b, reference)
        total += w * y
    return total, ctx.optical.counts_rate_bright * window


def _noisy(y, ref_counts, shots, shot_noise, rng):
    n_ref = ref_counts * shots
    if not shot_noise or n_ref <= 0:
        return y, 0.0
    lam = max(y, 0.0) * n_ref
    if rng is None:
        return y, math.sqrt(lam) / n_ref
    k = rng.poisson(lam)
    return k / n_ref, math.sqrt(max(k, 1)) / n_ref


def point_rng(seed: int, index: int, stream: int = 0) -> np.random.Generator:
    """Generator for sweep point ``index``; stream 1 feeds the reference run."""
    key = [int(seed), int(index)] + ([int(stream)] if stream else [])
    return np.random.default_rng(np.random.SeedSequence(key))


def _ratio(s, ss, r, sr):
    y = s / r
    return y, abs(y) * math.sqrt((ss / s) ** 2 + (sr / r) ** 2) if s and r else 0.0


def run_point(seq: PulseSequence, bindings, ctx: SimulationContext,
              rng: np.random.Generator | None = None) -> tuple[float, float]:
    """(signal, sigma) for one set of symbol bindings.

    Without ``rng`` the expected signal is returned with its predicted shot-noise
    sigma; with ``rng`` a Poisson sample replaces the expectation. Normalised
    sequences return the ratio to the reference run.
    """
    bindings = dict(bindings or {})
    for p in seq.pulses:
        missing = p.refs() - set(bindings)
        if missing:
            raise ValidationError(f"unbound symbol ${sorted(missing)[0]}")
    y, ref = mean_point(seq, bindings, ctx)
    sig = _noisy(y, ref, seq.shots_per_point, ctx.noise.shot_noise, rng)
    if not seq.normalize:
        return sig
    yr, refr = mean_point(seq, bindings, ctx, reference=True)
    return _ratio(*sig, *_noisy(yr, refr, seq.shots_per_point, ctx.noise.shot_noise, rng))


# ----------------------------------------------------------------------------
# sweeps

@dataclass(frozen=True)
class SweepMean:
    """Noise-free sweep: expected signal and the bright-level photon count per shot.

    ``y_ref`` holds the reference run of normalised sequences.
    """

    x: np.ndarray
    y: np.ndarray
    ref_counts: np.ndarray
    y_ref: np.ndarray | None = None


def mean_sweep(seq: PulseSequence, ctx: SimulationContext, workers: int | None = None) -> SweepMean:
    if seq.sweep is None:
        raise ValidationError("sequence has no sweep")
    grid = seq.sweep.grid()
    var = seq.sweep.variable

    def task(v):
        out = mean_point(seq, {var: float(v)}, ctx)
        if seq.normalize:
            out += (mean_point(seq, {var: float(v)}, ctx, reference=True)[0],)
        return out

    n = min(max_workers(workers), len(grid))
    # one BLAS thread per task keeps every point's arithmetic independent of ``n``
    with threadpool_limits(limits=1):
        if n == 1:
            res = [task(v) for v in grid]
        else:
            with ThreadPoolExecutor(max_workers=n) as ex:
                res = list(ex.map(task, grid))
    y = np.array([r[0] for r in res])
    ref = np.array([r[1] for r in res])
    y_ref = np.array([r[2] for r in res]) if seq.normalize else None
    return SweepMean(grid, y, ref, y_ref)


def sample_sweep(mean: SweepMean, seq: PulseSequence, ctx: SimulationContext,
                 seed: int | None = None, mode: str | None = None) -> Trace:
    """Shot-noise realisation of a noise-free sweep; point i uses seed (seed, i)."""
    seed = ctx.seed if seed is None else seed
    ys, ss = [], []
    shot = ctx.noise.shot_noise
    for i, (y, ref) in enumerate(zip(mean.y, mean.ref_counts)):
        yy, s = _noisy(y, ref, seq.shots_per_point, shot, point_rng(seed, i))
        if mean.y_ref is not None:
            yr, sr = _noisy(mean.y_ref[i], ref, seq.shots_per_point, shot, point_rng(seed, i, 1))
            yy, s = _ratio(yy, s, yr, sr)
        ys.append(yy)
        ss.append(s)
    meta = {
        "mode": mode or seq.name,
        "pressure_gpa": ctx.pressure,
        "field_gauss": ctx.field.magnitude,
        "seed": seed,
    }
    return Trace(mean.x, np.array(ys), np.array(ss), meta)


def run_sweep(seq: PulseSequence, ctx: SimulationContext, workers: int | None = None,
              mode: str | None = None) -> Trace:
    """Evaluate the whole grid. Output depends only on (seq, ctx), never on ``workers``."""
    return sample_sweep(mean_sweep(seq, ctx, workers), seq, ctx, mode=mode)
