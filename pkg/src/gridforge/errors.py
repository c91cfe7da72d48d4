"""Exception types raised across the package."""


class GridforgeError(Exception):
    pass


class ShapeError(GridforgeError, ValueError):
    pass


class DataError(GridforgeError, ValueError):
    pass


class SizeError(GridforgeError, ValueError):
    pass


class RangeError(GridforgeError, ValueError):
    pass


class ParamError(GridforgeError, ValueError):
    pass


class NumericError(GridforgeError, ArithmeticError):
    """Non-finite value met during a computation.

    ``layer`` holds the offending layer index when raised by the network code.
    """

    def __init__(self, message, layer=None):
        super().__init__(message)
        self.layer = layer


class SpecError(GridforgeError, ValueError):
    pass


class TrainingError(GridforgeError, RuntimeError):
    def __init__(self, message, epoch=None, batch=None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch


class CalibrationError(GridforgeError, ValueError):
    pass


class SimulationError(GridforgeError, RuntimeError):
    pass


class ConfigError(GridforgeError, ValueError):
    """Config document failed validation; ``pointer`` is a JSON pointer."""

    def __init__(self, message, pointer=""):
        super().__init__(f"{pointer or '/'}: {message}")
        self.pointer = pointer
