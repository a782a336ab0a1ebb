"""Flat ``key = value`` configuration with dotted section prefixes.

Example::

    # pressure model, SI units (Hz, Hz/GPa)
    pressure_model.q_slope = -3.5e3
    optical.pump_rate = 10e6
    noise.t1e = 254e-6
    noise.shot_noise = true
    field.magnitude = 460
    field.theta_deg = 0
    constants.gamma_n = 307.7
    simulation.cw_pump_rate = 1e5
    rng_seed = 7

Unknown keys are rejected and every error names the offending key.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from dataclasses import field as _field

from .dynamics import NoiseModel, OpticalModel
from .errors import ConfigError, NVDACError, ValidationError
from .pressure import PressureModel, default_paper_model, params_at
from .sequences.engine import SimulationContext, context_at
from .spinops import FieldVector

CONSTANT_KEYS = ("gamma_e", "gamma_n", "d_es", "a_perp", "a_par_es", "a_perp_es")
FIELD_KEYS = ("magnitude", "theta_deg", "phi_deg")
SIMULATION_KEYS = {
    "cw_pump_rate": float,
    "cw_window": float,
    "realistic_width": bool,
    "extra_width": float,
}


@dataclass(frozen=True)
class Config:
    pressure_model: PressureModel = _field(default_factory=default_paper_model)
    optical: OpticalModel = _field(default_factory=OpticalModel)
    noise: NoiseModel = _field(default_factory=NoiseModel)
    field: FieldVector = _field(default_factory=lambda: FieldVector(460.0))
    rng_seed: int = 0
    simulation: dict = _field(default_factory=dict)

    def context(self, pressure: float, seed: int | None = None, **kw) -> SimulationContext:
        sim = dict(self.simulation)
        realistic = sim.pop("realistic_width", False)
        sim.update(kw)
        realistic = sim.pop("realistic_width", realistic)
        b = sim.pop("field", None) or self.field
        return context_at(pressure, self.pressure_model, field=b,
                          realistic_width=realistic, optical=self.optical, noise=self.noise,
                          seed=self.rng_seed if seed is None else seed, **sim)

    def with_seed(self, seed: int) -> "Config":
        return replace(self, rng_seed=int(seed))


def _bool(text, key):
    t = text.strip().lower()
    if t in ("true", "yes", "on", "1"):
        return True
    if t in ("false", "no", "off", "0"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {text!r}")


def _float(text, key):
    try:
        v = float(text)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {text!r}") from None
    if math.isnan(v):
        raise ConfigError(f"{key}: NaN is not allowed")
    return v


def _int(text, key):
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {text!r}") from None


def _typed(cls, key, name, text):
    ftype = {f.name: f.type for f in fields(cls)}[name]
    if ftype in (bool, "bool"):
        return _bool(text, key)
    return _float(text, key)


def _build(cls, prefix, values, base):
    try:
        return replace(base, **values) if values else base
    except ValidationError as exc:
        # the dataclass messages already name ``section.field``; add the prefix otherwise
        msg = str(exc)
        if not msg.startswith(prefix):
            names = [k for k in values if k in msg]
            msg = f"{prefix}.{names[0]}: {msg}" if names else f"{prefix}: {msg}"
        raise ConfigError(msg) from None


def parse_config(text: str) -> Config:
    sections = {"pressure_model": {}, "optical": {}, "noise": {}, "field": {}, "constants": {},
                "simulation": {}}
    seed = 0
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in seen:
            raise ConfigError(f"{key}: duplicate key (line {lineno})")
        seen.add(key)
        if key == "rng_seed":
            seed = _int(value, key)
            continue
        section, _, name = key.partition(".")
        if section not in sections or not name:
            raise ConfigError(f"{key}: unknown key (line {lineno})")
        if section == "pressure_model":
            valid = {f.name for f in fields(PressureModel)} - set(CONSTANT_KEYS)
            cls = PressureModel
        elif section == "optical":
            valid, cls = {f.name for f in fields(OpticalModel)}, OpticalModel
        elif section == "noise":
            valid, cls = {f.name for f in fields(NoiseModel)}, NoiseModel
        elif section == "constants":
            valid, cls = set(CONSTANT_KEYS), PressureModel
        elif section == "field":
            valid, cls = set(FIELD_KEYS), None
        else:
            valid, cls = set(SIMULATION_KEYS), None
        if name not in valid:
            raise ConfigError(f"{key}: unknown key (line {lineno})")
        if section == "simulation":
            conv = SIMULATION_KEYS[name]
            sections[section][name] = _bool(value, key) if conv is bool else _float(value, key)
        elif cls is None:
            sections[section][name] = _float(value, key)
        else:
            sections[section][name] = _typed(cls, key, name, value)

    for name in ("gamma_e", "gamma_n", "d_es"):
        v = sections["constants"].get(name)
        if v is not None and not (v > 0 and math.isfinite(v)):
            raise ConfigError(f"constants.{name}: must be positive and finite")
    pm_values = dict(sections["pressure_model"])
    pm_values.update(sections["constants"])
    pm = _build(PressureModel, "pressure_model", pm_values, default_paper_model())
    for p in (pm.p_min, pm.p_max):
        try:
            params_at(pm, p)
        except ValidationError as exc:
            keys = [k for k in ("q0", "q_slope", "a_par0", "a_slope", "d_gs0", "d_slope")
                    if k in sections["pressure_model"]]
            where = f"pressure_model.{keys[0]}" if keys else "pressure_model"
            raise ConfigError(f"{where}: model invalid at {p} GPa: {exc}") from None
    opt = _build(OpticalModel, "optical", sections["optical"], OpticalModel())
    noise = _build(NoiseModel, "noise", sections["noise"], NoiseModel())
    fv = sections["field"]
    try:
        b = FieldVector(fv.get("magnitude", 460.0), math.radians(fv.get("theta_deg", 0.0)),
                        math.radians(fv.get("phi_deg", 0.0)) % (2 * math.pi))
    except ValidationError as exc:
        bad = "field.magnitude" if "magnitude" in str(exc) else "field.theta_deg" if "theta" in str(exc) \
            else "field.phi_deg"
        raise ConfigError(f"{bad}: {exc}") from None
    sim = sections["simulation"]
    for name in ("cw_pump_rate", "cw_window", "extra_width"):
        if name in sim and not sim[name] >= 0:
            raise ConfigError(f"simulation.{name}: must be >= 0")
    if sim.get("cw_window", 1.0) == 0:
        raise ConfigError("simulation.cw_window: must be > 0")
    return Config(pm, opt, noise, b, seed, sim)


def load_config(path) -> Config:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except FileNotFoundError:
        raise ConfigError(f"config not found: {path}") from None
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        return parse_config(text)
    except ConfigError:
        raise
    except NVDACError as exc:
        raise ConfigError(str(exc)) from None
