"""Exception hierarchy shared by all modules."""


class NVDACError(Exception):
    """Base class for package errors."""


class ValidationError(NVDACError, ValueError):
    pass


class MixingError(NVDACError):
    """Eigenstate labelling is ambiguous (near a level anti-crossing)."""


class RangeError(ValidationError):
    """Pressure outside the model's declared validity range."""


class StepSizeError(ValidationError):
    pass


class InitializationError(NVDACError):
    """A fitter could not produce a starting point."""


class UnderdeterminedError(NVDACError):
    pass


class ModelMismatchError(NVDACError):
    pass


class DSLSyntaxError(NVDACError):
    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = f"line {line}, column {column}: " if line is not None else ""
        super().__init__(where + message)


class ConfigError(NVDACError):
    pass
