"""Exception hierarchy.

Every error carries an ``exit_code`` so the command line front end can map
an error class to a process exit status without a lookup table of its own.
"""


class BayesLRPError(Exception):
    exit_code = 1


class ShapeError(BayesLRPError, ValueError):
    exit_code = 3


class ParameterError(BayesLRPError, ValueError):
    exit_code = 2


class ConfigError(ParameterError):
    exit_code = 2


class LayerIndexError(BayesLRPError, IndexError):
    exit_code = 2


class NumericError(BayesLRPError, ArithmeticError):
    exit_code = 5


class DivergenceError(NumericError):
    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class DivisionHazardError(NumericError, ZeroDivisionError):
    def __init__(self, layer, unit):
        super().__init__(f"zero LRP denominator at layer {layer}, unit {unit}")
        self.layer = layer
        self.unit = unit


class DegenerateInputError(NumericError):
    pass


class ValidationError(BayesLRPError, ValueError):
    exit_code = 3


class GeometryError(BayesLRPError, ValueError):
    exit_code = 3


class FormatError(BayesLRPError):
    exit_code = 4


class TruncatedFileError(FormatError):
    pass
