"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class SiteMedianError(Exception):
    exit_code = 2


class UsageError(SiteMedianError):
    exit_code = 1


class DataError(SiteMedianError, ValueError):
    """Bad or inconsistent input data."""

    exit_code = 2

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = []
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class MalformedCSVError(DataError):
    pass


class UnknownRoleError(DataError):
    pass


class RaggedRowError(DataError):
    pass


class NonNumericError(DataError):
    pass


class DuplicateIdError(DataError):
    pass


class CardinalityError(DataError):
    pass


class DuplicateCovariatesError(DataError):
    """Two sites share a covariate vector (distinct sites must be distinguishable)."""


class ZeroVarianceError(DataError):
    pass


class AlreadyStandardizedError(DataError):
    pass


class MissingValueError(DataError):
    """A sigma, cost or estimate needed by an operation is absent."""


class DimensionError(DataError):
    pass


class MetricSpecError(DataError):
    pass


class InfeasibleError(SiteMedianError):
    exit_code = 3


class ThresholdError(InfeasibleError):
    """Lipschitz constant at or below the threshold the treatment rule needs."""

    def __init__(self, message, threshold=None, site=None):
        self.threshold = threshold
        self.site = site
        super().__init__(message)


class ZeroDenominatorError(InfeasibleError):
    pass


class CapExceededError(SiteMedianError):
    exit_code = 4
