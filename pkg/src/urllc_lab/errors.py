"""Exception hierarchy.

Every error carries an ``exit_code`` used by the command-line front end:
1 for invalid input, 2 for infeasible or unstable configurations, 3 for
numerical trouble.
"""


class UrllcLabError(Exception):
    exit_code = 1
    kind = "error"


class ConfigError(UrllcLabError, ValueError):
    exit_code = 1
    kind = "config"


class InfeasibleError(UrllcLabError):
    exit_code = 2
    kind = "infeasible"


class StabilityError(InfeasibleError):
    """Traffic intensity lambda * n * E[tau] is not below one."""

    kind = "stability"


class NoFeasibleRateError(InfeasibleError):
    kind = "no-feasible-rate"


class DegenerateChainError(InfeasibleError):
    """The queue-size chain has no departures, so no steady state exists."""

    kind = "degenerate-chain"


class NumericalError(UrllcLabError, ArithmeticError):
    exit_code = 3
    kind = "numerical"


class PoleError(NumericalError):
    kind = "pole"


class InfiniteMeanError(NumericalError):
    kind = "infinite-mean"


class InstabilityError(NumericalError):
    kind = "instability"


class WindowEmptyError(NumericalError):
    kind = "window-empty"


class OptimizerError(NumericalError):
    kind = "optimizer"


class OverflowCoefficientError(NumericalError):
    kind = "overflow"


class DegreeOverflowError(NumericalError):
    kind = "degree-overflow"


class NormalizationError(NumericalError):
    kind = "normalization"
