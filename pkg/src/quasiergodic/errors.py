"""Exception hierarchy.

Every error carries a short machine-readable ``code`` so that the command
line front end can map failures onto exit codes and JSON reports.
"""


class QuasiErgodicError(Exception):
    """Base class for all errors raised by this package."""

    code = "error"


class UsageError(QuasiErgodicError, ValueError):
    """A precondition on user-supplied input was violated."""

    code = "usage"


class QuadratureFailed(QuasiErgodicError, ArithmeticError):
    """Adaptive quadrature did not reach the requested accuracy.

    Attributes
    ----------
    partial : float
        Best value obtained before giving up.
    integral : str or None
        Name of the integral being evaluated, when known.
    """

    code = "quadrature-failed"

    def __init__(self, message, partial=float("nan"), integral=None):
        super().__init__(message)
        self.partial = partial
        self.integral = integral


class ScaleRangeError(UsageError):
    code = "scale-range"


class GridConfigError(UsageError):
    code = "grid-config"


class CoefficientOverflow(QuasiErgodicError, ArithmeticError):
    code = "coefficient-overflow"

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class EigFailed(QuasiErgodicError, ArithmeticError):
    code = "eig-failed"

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class DegenerateLimit(QuasiErgodicError, ArithmeticError):
    """The limiting value is (numerically) zero, so a relative error is undefined."""

    code = "degenerate-limit"


class MeasureMismatch(UsageError):
    code = "measure-mismatch"


class ScaleUnboundedAtZero(QuasiErgodicError, ArithmeticError):
    code = "scale-unbounded-at-zero"


class BadExponent(UsageError):
    code = "bad-exponent"


class BadBracket(UsageError):
    code = "bad-bracket"


class ExtinctEnsemble(QuasiErgodicError, RuntimeError):
    """Every simulated path was absorbed before the first time of interest."""

    code = "extinct-ensemble"

    def __init__(self, message, stats=None):
        super().__init__(message)
        self.stats = stats or {}


class InsufficientDecayData(QuasiErgodicError, RuntimeError):
    code = "insufficient-decay-data"
