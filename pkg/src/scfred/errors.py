"""Exception types shared across the package."""


class ScfredError(Exception):
    """Base class for all errors raised by scfred."""


# scale spaces
class InvalidWeightsError(ScfredError, ValueError):
    pass


class InvalidDomainError(ScfredError, ValueError):
    pass


class LevelOutOfRangeError(ScfredError, ValueError):
    pass


class InvalidPairError(ScfredError, ValueError):
    pass


class DomainMismatchError(ScfredError, ValueError):
    pass


class EvaluationError(ScfredError, ArithmeticError):
    pass


# splicings
class ParameterDomainError(ScfredError, ValueError):
    """Gluing parameter outside its admissible range."""


class InterfaceMismatchError(ScfredError, ValueError):
    pass


# germs
class NotAContractionError(ScfredError, ArithmeticError):
    def __init__(self, message, ratios=None):
        super().__init__(message)
        self.ratios = list(ratios or [])


class ConvergenceError(ScfredError, ArithmeticError):
    def __init__(self, message, residual=None, history=None):
        super().__init__(message)
        self.residual = residual
        self.history = list(history or [])


class TrustRegionError(ScfredError, ValueError):
    pass


# Morse data
class DegenerateCriticalPointError(ScfredError, ValueError):
    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class TotalOrderViolationError(ScfredError, ValueError):
    pass


class PreconditionError(ScfredError, ValueError):
    pass


class NoTrajectoryFoundError(ScfredError, ArithmeticError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class CorrectionError(ScfredError, ArithmeticError):
    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history or [])


# algebra
class TableError(ScfredError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class GradingError(ScfredError, ValueError):
    pass


class NotADifferentialError(ScfredError, ValueError):
    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class MustVerifyError(ScfredError, RuntimeError):
    pass


class StructureMismatchError(ScfredError, ValueError):
    pass


class ConfigError(ScfredError, ValueError):
    """Malformed configuration; carries the offending section/key/line."""

    def __init__(self, message, key=None, line=None):
        super().__init__(message)
        self.key = key
        self.line = line
