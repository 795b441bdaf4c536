"""Exception types raised across the package."""


class PedcrossError(Exception):
    """Base class for all package errors."""


class ConfigError(PedcrossError, ValueError):
    """Invalid configuration; ``field`` names the offending entry."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class EncodingError(PedcrossError, ValueError):
    pass


class ShapeError(PedcrossError, ValueError):
    pass


class TrainingDivergenceError(PedcrossError, ArithmeticError):
    def __init__(self, message, *, epoch=None, last_loss=None):
        self.epoch = epoch
        self.last_loss = last_loss
        super().__init__(f"{message} (epoch={epoch}, last finite loss={last_loss})")


class UnsupportedFamilyError(PedcrossError, ValueError):
    pass


class ModelFileError(PedcrossError, ValueError):
    """Model file is unreadable or malformed."""


class ModelVersionError(ModelFileError):
    pass
