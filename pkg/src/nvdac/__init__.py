"""Digital twin of a diamond-anvil-cell NV quantum sensor reading out its own 14N nucleus."""
from .config import Config, load_config, parse_config
from .errors import NVDACError, ValidationError
from .pressure import PressureModel, default_paper_model, params_at
from .spinops import FieldVector, NVParams

__version__ = "0.1.0"

__all__ = [
    "Config",
    "FieldVector",
    "NVDACError",
    "NVParams",
    "PressureModel",
    "ValidationError",
    "default_paper_model",
    "load_config",
    "params_at",
    "parse_config",
]
