"""Exception hierarchy for diagchart."""


class DiagChartError(Exception):
    """Base class for all diagchart errors."""


class DimensionError(DiagChartError):
    """Inputs have incompatible or invalid dimensions."""


class InsufficientDataError(DiagChartError):
    """Not enough observations for the requested estimate."""


class DegenerateVariableError(DiagChartError):
    """One or more variables have zero (or nonpositive) variance.

    The offending column indices are stored in ``columns``.
    """

    def __init__(self, columns, message=None):
        self.columns = list(columns)
        if message is None:
            message = f"degenerate (zero-variance) columns: {self.columns}"
        super().__init__(message)


class DegenerateSubsetError(DegenerateVariableError):
    """A candidate subset has zero variance in some column."""


class IllConditionedEstimateError(DiagChartError):
    """A trace estimate came out nonpositive; the sample is too small
    relative to the dimension for this correlation structure."""


class InvalidParametersError(DiagChartError):
    """Process parameters fail their invariants (e.g. nonpositive tr2)."""


class EstimationFailureError(DiagChartError):
    """Robust Phase I estimation could not produce usable estimates."""


class ConfigError(DiagChartError):
    """A config file or CLI parameter set is malformed.

    ``field`` names the offending entry.
    """

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"config field '{field}': {message}")
