"""Exception types shared across the package."""


class SynthsurvError(Exception):
    """Base class for all package-specific errors."""


class SchemaError(SynthsurvError):
    """A required CSV column is missing or the header is malformed."""


class RowValidationError(SynthsurvError):
    """A CSV row violates a field-level constraint; carries the row number."""

    def __init__(self, row: int, message: str):
        super().__init__(f"row {row}: {message}")
        self.row = row


class CellConflictError(SynthsurvError):
    """Observations within one (period, unit) cell disagree on treatment."""

    def __init__(self, period: int, unit: str, message: str):
        super().__init__(f"cell ({period}, {unit}): {message}")
        self.cell = (period, unit)


class EstimationError(SynthsurvError):
    """An estimator could not produce a result from the given inputs."""


class ConvergenceError(EstimationError):
    """An iterative fit stopped before reaching its tolerance."""

    def __init__(self, message: str, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate
