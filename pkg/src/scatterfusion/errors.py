"""Exception hierarchy shared by every module.

The CLI maps :class:`UsageError` to exit code 2 and every other
:class:`ScatterFusionError` to exit code 1.
"""


class ScatterFusionError(Exception):
    pass


class DimensionError(ScatterFusionError, ValueError):
    pass


class ContractError(ScatterFusionError, ValueError):
    pass


class NumericError(ScatterFusionError, ArithmeticError):
    pass


class SupportError(ScatterFusionError, ValueError):
    """A filter does not fit the signal it is applied to."""


class HypothesisViolation(ScatterFusionError, ValueError):
    """A deformation field breaks ``max |tau'| < 1``."""


class DataError(ScatterFusionError, ValueError):
    pass


class ConfigError(ScatterFusionError, ValueError):
    pass


class CheckpointError(ScatterFusionError, IOError):
    pass


class UsageError(ScatterFusionError):
    pass
