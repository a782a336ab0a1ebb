"""Swept measurement records and their CSV form.

File layout::

    # mode=nmr_pulsed_ms0 pressure_gpa=0.6 field_gauss=460
    x,y,sigma
    4.95e6,0.97,0.0021
    ...
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class Trace:
    """(x, y, sigma) triples with x strictly increasing; x is Hz or seconds."""

    x: np.ndarray
    y: np.ndarray
    sigma: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        s = np.zeros_like(y) if self.sigma is None else np.asarray(self.sigma, dtype=float)
        if not (x.ndim == y.ndim == s.ndim == 1 and len(x) == len(y) == len(s)):
            raise ValidationError("x, y and sigma must be 1-D and of equal length")
        if len(x) > 1 and not np.all(np.diff(x) > 0):
            raise ValidationError("x must be strictly increasing")
        if np.any(s < 0):
            raise ValidationError("sigma must be non-negative")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "sigma", s)

    def __len__(self):
        return len(self.x)

    @property
    def weighted(self) -> bool:
        return bool(np.all(self.sigma > 0))

    @property
    def mode(self) -> str:
        return str(self.meta.get("mode", ""))


Spectrum = Trace
TimeTrace = Trace


def _fmt(v) -> str:
    return repr(float(v))


def to_csv(trace: Trace) -> str:
    meta = trace.meta
    head = "# mode={} pressure_gpa={} field_gauss={}".format(
        meta.get("mode", "unknown"),
        _fmt(meta.get("pressure_gpa", float("nan"))),
        _fmt(meta.get("field_gauss", float("nan"))),
    )
    lines = [head, "x,y,sigma"]
    lines += [f"{_fmt(a)},{_fmt(b)},{_fmt(c)}" for a, b, c in zip(trace.x, trace.y, trace.sigma)]
    return "\n".join(lines) + "\n"


def write_csv(trace: Trace, path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(to_csv(trace))


class CSVFormatError(ValidationError):
    def __init__(self, message, row=None):
        self.row = row
        super().__init__(f"row {row}: {message}" if row is not None else message)


def parse_csv(text: str) -> Trace:
    meta = {}
    xs, ys, ss = [], [], []
    header_seen = False
    for row, raw in enumerate(io.StringIO(text), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            for tok in line[1:].split():
                if "=" in tok:
                    k, v = tok.split("=", 1)
                    if k in ("pressure_gpa", "field_gauss"):
                        try:
                            meta[k] = float(v)
                        except ValueError:
                            raise CSVFormatError(f"bad header value {tok!r}", row) from None
                    else:
                        meta[k] = v
            continue
        if not header_seen:
            if [c.strip() for c in line.split(",")] != ["x", "y", "sigma"]:
                raise CSVFormatError("expected column header 'x,y,sigma'", row)
            header_seen = True
            continue
        cols = line.split(",")
        if len(cols) != 3:
            raise CSVFormatError(f"expected 3 columns, got {len(cols)}", row)
        try:
            a, b, c = (float(v) for v in cols)
        except ValueError:
            raise CSVFormatError("non-numeric value", row) from None
        xs.append(a)
        ys.append(b)
        ss.append(c)
    if not xs:
        raise CSVFormatError("no data rows")
    try:
        return Trace(np.array(xs), np.array(ys), np.array(ss), meta)
    except ValidationError as exc:
        raise CSVFormatError(str(exc)) from None


def read_csv(path) -> Trace:
    with open(path) as fh:
        return parse_csv(fh.read())
