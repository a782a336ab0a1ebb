"""Canonical experiments. Sweep windows are centred on the lines predicted for ``ctx``."""
from __future__ import annotations

import math

from ..errors import ValidationError
from ..spinops import electron_frequency, nmr_frequencies, odmr_lines
from .dsl import DEFAULT_SHOTS, Pulse, PulseSequence, Sweep
from .engine import SimulationContext, context_at

PRESETS = ("odmr_cw", "rabi_e", "nmr_cw", "nmr_pulsed_ms0", "nmr_pulsed_ms1", "rabi_n", "fid_n", "t1_e")

DEFAULTS = {
    "laser": 3e-6,
    "read": 3e-7,
    "rabi_mw": 62e6,
    "rabi_rf": 25e3,
    "rabi_odmr": 2e6,
    "rabi_cw_rf": 5e3,
    "nmr_span": 300e3,
    "nmr_points": 151,
    "odmr_margin": 60e6,
    "odmr_points": 801,
    "rabi_e_max": 100e-9,
    "rabi_e_points": 200,
    "rabi_n_max": 200e-6,
    "rabi_n_points": 101,
    "fid_max": 300e-6,
    "fid_points": 151,
    "t1_max": 1.2e-3,
    "t1_points": 61,
    "shots": DEFAULT_SHOTS,
}

# sequences use these preset-specific keys in addition to DEFAULTS
_EXTRA = {"rabi", "center", "detuning", "start", "stop", "points"}


def _opts(overrides):
    o = dict(DEFAULTS)
    for k, v in (overrides or {}).items():
        if k not in DEFAULTS and k not in _EXTRA:
            raise ValidationError(f"unknown preset override {k!r}")
        o[k] = v
    return o


def _lines(ctx):
    f0, f1 = nmr_frequencies(ctx.params, ctx.field)
    return f0, f1, electron_frequency(ctx.params, ctx.field)


def _window(o, center, span, points):
    start = o.get("start", center - span / 2)
    stop = o.get("stop", center + span / 2)
    return start, stop, int(o.get("points", points))


def preset(name: str, ctx: SimulationContext | None = None, overrides: dict | None = None) -> PulseSequence:
    """Build a named experiment; ``overrides`` tweak durations, Rabi frequencies and windows."""
    if name not in PRESETS:
        raise ValidationError(f"unknown preset {name!r}; valid: {', '.join(PRESETS)}")
    ctx = context_at(0.6) if ctx is None else ctx
    o = _opts(overrides)
    f0, f1, fe = _lines(ctx)
    laser = Pulse("laser", o["laser"])
    read = Pulse("read", o["read"])
    shots = int(o["shots"])

    def seq(pulses, sweep, cw=False):
        return PulseSequence(tuple(pulses), sweep, shots, cw, name)

    if name == "odmr_cw":
        lines = odmr_lines(ctx.params, ctx.field)
        lo = min(lines) - o["odmr_margin"]
        hi = max(lines) + o["odmr_margin"]
        start, stop, n = _window(o, (lo + hi) / 2, hi - lo, o["odmr_points"])
        return seq([Pulse("laser"), Pulse("mw", None, "$f", o.get("rabi", o["rabi_odmr"])),
                    Pulse("read")], Sweep("f", start, stop, n), cw=True)
    if name == "nmr_cw":
        start, stop, n = _window(o, o.get("center", f0), o["nmr_span"], o["nmr_points"])
        return seq([Pulse("laser"), Pulse("rf", None, "$f", o.get("rabi", o["rabi_cw_rf"])),
                    Pulse("read")], Sweep("f", start, stop, n), cw=True)
    if name == "rabi_e":
        mw = Pulse("mw", "$t", fe, o.get("rabi", o["rabi_mw"]))
        n = int(o.get("points", o["rabi_e_points"]))
        stop = o.get("stop", o["rabi_e_max"])
        start = o.get("start", stop / n)
        return seq([laser, mw, read], Sweep("t", start, stop, n))
    if name == "nmr_pulsed_ms0":
        start, stop, n = _window(o, o.get("center", f0), o["nmr_span"], o["nmr_points"])
        return seq([laser, Pulse("rf", "pi", "$f", o.get("rabi", o["rabi_rf"])), read],
                   Sweep("f", start, stop, n))
    if name == "nmr_pulsed_ms1":
        start, stop, n = _window(o, o.get("center", f1), o["nmr_span"], o["nmr_points"])
        mw = Pulse("mw", "pi", fe, o["rabi_mw"])
        return seq([laser, mw, Pulse("rf", "pi", "$f", o.get("rabi", o["rabi_rf"])), mw, read],
                   Sweep("f", start, stop, n))
    if name == "rabi_n":
        n = int(o.get("points", o["rabi_n_points"]))
        stop = o.get("stop", o["rabi_n_max"])
        start = o.get("start", stop / n)
        rf = Pulse("rf", "$t", o.get("center", f0), o.get("rabi", o["rabi_rf"]))
        return seq([laser, rf, read], Sweep("t", start, stop, n)).replace(normalize=True)
    if name == "fid_n":
        delta = o.get("detuning", 3.0 / (2 * math.pi * ctx.noise.t2n_star))
        f = o.get("center", f0) + delta
        rabi = o.get("rabi", o["rabi_rf"])
        half = Pulse("rf", "pi/2", f, rabi)
        n = int(o.get("points", o["fid_points"]))
        stop = o.get("stop", o["fid_max"])
        start = o.get("start", stop / n)
        return seq([laser, half, Pulse("wait", "$tau"), half, read], Sweep("tau", start, stop, n)).replace(
            normalize=True)
    # t1_e
    n = int(o.get("points", o["t1_points"]))
    stop = o.get("stop", o["t1_max"])
    start = o.get("start", stop / n)
    mw = Pulse("mw", "pi", fe, o["rabi_mw"])
    return seq([laser, mw, Pulse("wait", "$tau"), read], Sweep("tau", start, stop, n))
