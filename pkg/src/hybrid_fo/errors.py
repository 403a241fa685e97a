"""Exception hierarchy shared by every module of the package."""


class HybridFOError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(HybridFOError, ValueError):
    pass


class AssumptionViolationError(HybridFOError, ValueError):
    """A standing modelling assumption (eigenvalues, timer scales) does not hold."""


class SynthesisError(HybridFOError):
    pass


class NumericalError(HybridFOError, ArithmeticError):
    pass


class ConvergenceError(NumericalError):
    pass


class StepsizeError(HybridFOError, ValueError):
    pass


class ContractViolation(HybridFOError):
    """An operation was called outside its documented precondition."""


class ConfigError(HybridFOError, ValueError):
    pass


class ZenoGuardError(HybridFOError, RuntimeError):
    pass


class InsufficientDataError(HybridFOError, ValueError):
    pass


class RegressionError(HybridFOError):
    pass
