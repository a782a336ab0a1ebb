"""Pulse-sequence types and the line-oriented text format.

Grammar (one statement per line, ``#`` starts a comment, SI units, no suffixes)::

    laser DUR | laser_read DUR | wait DUR
    mw FREQ RABI (DUR | pi | pi/2) [PHASE]
    rf FREQ RABI (DUR | pi | pi/2) [PHASE]
    sweep IDENT START STOP POINTS
    cw { pulse ; pulse ; ... }        # inside: laser, mw/rf without DUR, read
    normalize                         # divide by a reference run without mw/rf drive

FREQ and DUR accept ``$IDENT`` for the swept variable. Durations are seconds,
frequencies and Rabi frequencies Hz, phases radians.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import DSLSyntaxError, ValidationError

KINDS = ("laser", "mw", "rf", "wait", "read")
PI_SYMBOLS = ("pi", "pi/2")
DEFAULT_SHOTS = 300_000
_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


@dataclass(frozen=True)
class Pulse:
    """One segment. ``duration`` may be a float, "pi", "pi/2" or "$name";
    ``frequency`` a float or "$name". ``duration`` is None only inside CW blocks."""

    kind: str
    duration: object = None
    frequency: object = None
    rabi: float | None = None
    phase: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown pulse kind {self.kind!r}")
        driven = self.kind in ("mw", "rf")
        if driven:
            if self.frequency is None or self.rabi is None:
                raise ValidationError(f"{self.kind} pulse needs frequency and rabi")
            if not self.rabi > 0:
                raise ValidationError("rabi must be > 0")
        elif self.frequency is not None or self.rabi is not None:
            raise ValidationError(f"{self.kind} pulse takes no frequency or rabi")
        if isinstance(self.duration, str):
            if self.duration in PI_SYMBOLS and not driven:
                raise ValidationError("pi durations are only allowed on mw/rf pulses")
            if self.duration not in PI_SYMBOLS and not _is_ref(self.duration):
                raise ValidationError(f"bad symbolic duration {self.duration!r}")
        elif self.duration is not None and not self.duration > 0:
            raise ValidationError("duration must be > 0")
        if isinstance(self.frequency, str) and not _is_ref(self.frequency):
            raise ValidationError(f"bad symbolic frequency {self.frequency!r}")
        if isinstance(self.frequency, float) and not self.frequency > 0:
            raise ValidationError("frequency must be > 0")
        if not math.isfinite(self.phase):
            raise ValidationError("phase must be finite")

    def refs(self) -> set:
        return {v[1:] for v in (self.duration, self.frequency) if _is_ref(v)}

    def resolved(self, bindings: dict) -> "Pulse":
        """Copy with sweep symbols substituted and pi durations turned into seconds."""
        def sub(v):
            if _is_ref(v):
                name = v[1:]
                if name not in bindings:
                    raise ValidationError(f"unbound symbol ${name}")
                return float(bindings[name])
            return v

        freq = sub(self.frequency)
        dur = sub(self.duration)
        if dur == "pi":
            dur = 1.0 / (2.0 * self.rabi)
        elif dur == "pi/2":
            dur = 1.0 / (4.0 * self.rabi)
        return Pulse(self.kind, dur, freq, self.rabi, self.phase)


@dataclass(frozen=True)
class Sweep:
    variable: str
    start: float
    stop: float
    points: int
    scale: str = "linear"

    def __post_init__(self):
        if not _IDENT.match(self.variable):
            raise ValidationError(f"bad sweep variable name {self.variable!r}")
        if self.points < 1:
            raise ValidationError("sweep needs at least one point")
        if self.scale != "linear":
            raise ValidationError("only linear sweeps are supported")
        if self.points > 1 and not self.stop > self.start:
            raise ValidationError("sweep stop must exceed start")

    def grid(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, self.points)


@dataclass(frozen=True)
class PulseSequence:
    pulses: tuple
    sweep: Sweep | None = None
    shots_per_point: int = DEFAULT_SHOTS
    cw: bool = False
    name: str = field(default="custom", compare=False)
    normalize: bool = False

    def __post_init__(self):
        object.__setattr__(self, "pulses", tuple(self.pulses))
        if not self.pulses:
            raise ValidationError("sequence has no pulses")
        if self.shots_per_point < 1:
            raise ValidationError("shots_per_point must be >= 1")
        if not self.cw:
            if not any(p.kind == "read" for p in self.pulses):
                raise ValidationError("pulsed sequence needs at least one read pulse")
            if any(p.duration is None for p in self.pulses):
                raise ValidationError("pulsed segments need a duration")
        else:
            drives = [p for p in self.pulses if p.kind in ("mw", "rf")]
            if len(drives) > 1:
                raise ValidationError("a CW block supports a single mw or rf tone")
            if any(p.kind == "wait" for p in self.pulses):
                raise ValidationError("wait is meaningless inside a CW block")
            if self.normalize:
                raise ValidationError("normalize applies to pulsed sequences only")
        bound = {self.sweep.variable} if self.sweep else set()
        for p in self.pulses:
            missing = p.refs() - bound
            if missing:
                raise ValidationError(f"unresolved sweep variable ${sorted(missing)[0]}")

    def replace(self, **kw) -> "PulseSequence":
        return replace(self, **kw)

    @property
    def sweep_unit(self) -> str | None:
        """'s' when the swept symbol is a duration, 'Hz' when it is a frequency."""
        if self.sweep is None:
            return None
        ref = "$" + self.sweep.variable
        return "s" if any(p.duration == ref for p in self.pulses) else "Hz"


def _is_ref(v) -> bool:
    return isinstance(v, str) and v.startswith("$") and bool(_IDENT.match(v[1:]))


# ----------------------------------------------------------------------------
# parser

_TOKEN = re.compile(r"\{|\}|;|[^\s{};]+")


def _tokens(line: str):
    return [(m.group(), m.start() + 1) for m in _TOKEN.finditer(line)]


def _float(tok, line, col, what):
    try:
        v = float(tok)
    except ValueError:
        raise DSLSyntaxError(f"expected {what}, got {tok!r}", line, col) from None
    if not math.isfinite(v):
        raise DSLSyntaxError(f"{what} must be finite", line, col)
    return v


def _int(tok, line, col, what):
    if not re.fullmatch(r"[0-9]+", tok):
        raise DSLSyntaxError(f"expected integer {what}, got {tok!r}", line, col)
    return int(tok)


def _ref_or_float(tok, line, col, what):
    if tok.startswith("$"):
        if not _IDENT.match(tok[1:]):
            raise DSLSyntaxError(f"bad identifier {tok!r}", line, col)
        return tok
    return _float(tok, line, col, what)


def _pulse(toks, line, cw, eol_col):
    """Parse one pulse from a token list [(text, col), ...]."""
    word, col = toks[0]
    args = toks[1:]

    def need(i, what):
        if i >= len(args):
            c = args[-1][1] + len(args[-1][0]) if args else col + len(word)
            raise DSLSyntaxError(f"{word}: missing {what}", line, c)
        return args[i]

    def done(n):
        if len(args) > n:
            raise DSLSyntaxError(f"{word}: unexpected {args[n][0]!r}", line, args[n][1])

    try:
        if word in ("laser", "wait", "laser_read", "read"):
            if word == "read" and not cw:
                raise DSLSyntaxError("'read' without window is only valid in a cw block; "
                                     "use laser_read DUR", line, col)
            if cw and not args and word in ("laser", "read"):
                return Pulse("read" if word == "read" else "laser")
            tok, c = need(0, "duration")
            dur = _ref_or_float(tok, line, c, "duration")
            done(1)
            return Pulse("read" if word in ("laser_read", "read") else word, dur)
        if word in ("mw", "rf"):
            ftok, fc = need(0, "frequency")
            freq = _ref_or_float(ftok, line, fc, "frequency")
            rtok, rc = need(1, "rabi frequency")
            rabi = _float(rtok, line, rc, "rabi frequency")
            if cw and len(args) == 2:
                return Pulse(word, None, freq, rabi)
            dtok, dc = need(2, "duration")
            dur = dtok if dtok in PI_SYMBOLS else _ref_or_float(dtok, line, dc, "duration")
            phase = 0.0
            if len(args) > 3:
                phase = _float(args[3][0], line, args[3][1], "phase")
            done(4)
            return Pulse(word, dur, freq, rabi, phase)
    except ValidationError as exc:
        if isinstance(exc, DSLSyntaxError):
            raise
        raise DSLSyntaxError(str(exc), line, col) from None
    raise DSLSyntaxError(f"unknown keyword {word!r}", line, col)


def parse_sequence(text: str, shots_per_point: int = DEFAULT_SHOTS, name: str = "custom") -> PulseSequence:
    pulses = []
    sweep = None
    sweep_at = None
    cw = False
    normalize = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0]
        toks = _tokens(body)
        if not toks:
            continue
        word, col = toks[0]
        if word == "normalize":
            if len(toks) > 1:
                raise DSLSyntaxError(f"normalize: unexpected {toks[1][0]!r}", lineno, toks[1][1])
            normalize = True
        elif word == "sweep":
            if sweep is not None:
                raise DSLSyntaxError(f"duplicate sweep declaration (first on line {sweep_at})",
                                     lineno, col)
            if len(toks) != 5:
                raise DSLSyntaxError("sweep needs: IDENT START STOP POINTS", lineno, col)
            var, vc = toks[1]
            if not _IDENT.match(var):
                raise DSLSyntaxError(f"bad identifier {var!r}", lineno, vc)
            start = _float(toks[2][0], lineno, toks[2][1], "sweep start")
            stop = _float(toks[3][0], lineno, toks[3][1], "sweep stop")
            npts = _int(toks[4][0], lineno, toks[4][1], "point count")
            try:
                sweep = Sweep(var, start, stop, npts)
            except ValidationError as exc:
                raise DSLSyntaxError(str(exc), lineno, col) from None
            sweep_at = lineno
        elif word == "cw":
            if cw or pulses:
                raise DSLSyntaxError("cw block cannot be combined with other pulses", lineno, col)
            if len(toks) < 2 or toks[1][0] != "{":
                raise DSLSyntaxError("expected '{' after cw", lineno, col + 2)
            if toks[-1][0] != "}":
                raise DSLSyntaxError("expected '}' closing the cw block", lineno, len(body.rstrip()) + 1)
            inner = toks[2:-1]
            groups, cur = [], []
            for t in inner:
                if t[0] in ("{", "}"):
                    raise DSLSyntaxError(f"unexpected {t[0]!r}", lineno, t[1])
                if t[0] == ";":
                    if not cur:
                        raise DSLSyntaxError("empty statement in cw block", lineno, t[1])
                    groups.append(cur)
                    cur = []
                else:
                    cur.append(t)
            if not cur:
                raise DSLSyntaxError("empty statement in cw block", lineno, toks[-1][1])
            groups.append(cur)
            for g in groups:
                pulses.append(_pulse(g, lineno, True, len(body)))
            cw = True
        else:
            if cw:
                raise DSLSyntaxError("cw block cannot be combined with other pulses", lineno, col)
            for t in toks[1:]:
                if t[0] in ("{", "}", ";"):
                    raise DSLSyntaxError(f"unexpected {t[0]!r}", lineno, t[1])
            pulses.append(_pulse(toks, lineno, False, len(body)))
    if not pulses:
        raise DSLSyntaxError("no pulses found", 1, 1)
    bound = {sweep.variable} if sweep else set()
    for p in pulses:
        missing = p.refs() - bound
        if missing:
            raise DSLSyntaxError(f"unresolved sweep variable ${sorted(missing)[0]}",
                                 _find_line(text, "$" + sorted(missing)[0]), 1)
    try:
        return PulseSequence(tuple(pulses), sweep, shots_per_point, cw, name, normalize)
    except ValidationError as exc:
        raise DSLSyntaxError(str(exc), 1, 1) from None


def _find_line(text, needle):
    for i, raw in enumerate(text.splitlines(), start=1):
        if needle in raw.split("#", 1)[0]:
            return i
    return 1


# ----------------------------------------------------------------------------
# renderer

def _num(v) -> str:
    return v if isinstance(v, str) else repr(float(v))


def _render_pulse(p: Pulse, cw: bool) -> str:
    if p.kind == "read":
        return "read" if p.duration is None else f"laser_read {_num(p.duration)}"
    if p.kind in ("laser", "wait"):
        return p.kind if p.duration is None else f"{p.kind} {_num(p.duration)}"
    parts = [p.kind, _num(p.frequency), _num(p.rabi)]
    if p.duration is not None:
        parts.append(_num(p.duration))
        if p.phase:
            parts.append(_num(p.phase))
    return " ".join(parts)


def render(seq: PulseSequence) -> str:
    if seq.cw:
        lines = ["cw { " + "; ".join(_render_pulse(p, True) for p in seq.pulses) + " }"]
    else:
        lines = [_render_pulse(p, False) for p in seq.pulses]
    if seq.sweep:
        s = seq.sweep
        lines.append(f"sweep {s.variable} {_num(s.start)} {_num(s.stop)} {s.points}")
    if seq.normalize:
        lines.append("normalize")
    return "\n".join(lines) + "\n"
