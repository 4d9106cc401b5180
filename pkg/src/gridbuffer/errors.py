"""Exception hierarchy. Each class carries the CLI exit code for its failure class."""


class GridBufferError(Exception):
    exit_code = 1


class ConfigError(GridBufferError):
    """Invalid parameter or run configuration (exit 2)."""

    exit_code = 2


class DataError(GridBufferError):
    """Malformed or insufficient input data: traces, catalogs (exit 3)."""

    exit_code = 3


class InfeasibleQosError(GridBufferError):
    """No operating mode satisfies the QoS constraints (exit 4)."""

    exit_code = 4


class ForecasterError(GridBufferError):
    """A forecast backend failed; the engine falls back to persistence (exit 5 if fatal)."""

    exit_code = 5


class BridgeError(ForecasterError):
    """The external forecaster process could not be started or spoken to."""

    exit_code = 5


class FeasibilityError(GridBufferError):
    """An action was applied to a battery state where it is not admissible."""

    exit_code = 1


class UndefinedMetricError(GridBufferError):
    """A metric has no defined value on the given inputs (e.g. MAPE on all-zero actuals)."""

    exit_code = 1
