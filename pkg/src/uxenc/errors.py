"""Exception hierarchy shared by all modules.

Every error carries a short machine-parsable ``category`` used by the CLI
for its one-line error reports and exit codes.
"""


class UxencError(Exception):
    category = "internal"
    exit_code = 1


class ConfigurationError(UxencError):
    """Invalid configuration values or ranges.

    ``violations`` lists every offending field, not just the first one.
    """

    category = "config"
    exit_code = 2

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class DataError(UxencError):
    category = "data"
    exit_code = 3


class GeometryError(UxencError):
    category = "geometry"
    exit_code = 4


class DegenerateSignalError(UxencError):
    category = "degenerate-signal"
    exit_code = 5


class InfeasibleError(UxencError):
    category = "infeasible"
    exit_code = 6


class ShapeError(UxencError):
    """Shape contract violated; names the primitive that raised it."""

    category = "shape"
    exit_code = 7

    def __init__(self, primitive, message):
        self.primitive = primitive
        super().__init__(f"{primitive}: {message}")


class DivergenceError(UxencError):
    category = "divergence"
    exit_code = 8
