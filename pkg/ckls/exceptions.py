"""
Error hierarchy for the ckls app.

Every error carries the exit code the command line reports for it:
1 for rejected input, 2 for numerical failures. Usage errors (exit 3) are
argparse's and never reach this module.
"""


class CklsError(Exception):
    """Base class for all ckls errors"""
    exit_code = 2


# Input errors (exit 1)

class ParameterError(CklsError):
    """A model parameter set was rejected"""
    exit_code = 1

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class NonFiniteParameter(ParameterError):
    pass


class NonPositiveParameter(ParameterError):
    pass


class ElasticityOutOfRange(ParameterError):
    pass


class FellerViolationAtHalf(ParameterError):
    pass


class ConfigError(ParameterError):
    """Unreadable parameter file, unknown or missing keys"""


class DomainError(CklsError):
    """Argument outside the positive domain of a function"""
    exit_code = 1


# Numerical failures (exit 2)

class NumericalFailure(CklsError):
    exit_code = 2


class ConvergenceFailure(NumericalFailure):
    """A series hit its term cap before meeting its stopping rule"""


class QuadratureFailure(NumericalFailure):
    pass


class NormalizationFailure(NumericalFailure):
    pass


class Inconclusive(NumericalFailure):
    """Boundary probes neither converged nor clearly diverged"""

    def __init__(self, message, evidence=()):
        super().__init__(message)
        self.evidence = list(evidence)


class OverflowToZeroOrInf(NumericalFailure):
    """log M left the double range on a path"""


class ExcessiveOverflow(NumericalFailure):
    """Too many paths overflowed for the estimate to be trusted"""


class NegativeSRealization(NumericalFailure):
    """The Gaussian S recursion crossed zero (strict mode only)"""


class CensoredBatch(NumericalFailure):
    """Every path of an exact-scheme batch was censored"""
