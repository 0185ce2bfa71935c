from __future__ import annotations


class HioError(ValueError):
    """Base class for planner failures that callers are expected to handle."""


class ConfigError(HioError):
    pass


class ScenarioParseError(HioError):
    pass


class ScenarioValidationError(HioError):
    pass


class PlanError(HioError):
    pass


class BatchingParametersMissing(HioError):
    pass


class OracleTooLargeError(HioError):
    pass


class OffloadingInfeasibleError(HioError):
    """A fixed term of the offloading LP already exceeds its budget."""


class UnknownMethodError(HioError):
    pass
