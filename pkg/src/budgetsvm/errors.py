"""Exception types raised across the package."""


class InvalidInputError(ValueError):
    """Argument values violate an operation's preconditions."""


class InvalidStateError(RuntimeError):
    """An object is not in a state the operation can work with."""


class UndefinedMetricError(ArithmeticError):
    """A metric is undefined for the given counts (e.g. no positives seen)."""


class PlanError(ValueError):
    """An experiment plan file could not be parsed or validated."""

    def __init__(self, message, key=None, line=None):
        self.message = message
        self.key = key
        self.line = line
        where = []
        if key is not None:
            where.append(f"key {key!r}")
        if line is not None:
            where.append(f"line {line}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
