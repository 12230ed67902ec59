"""Exception types shared across the package."""


class FaceIQError(Exception):
    """Base class for all package errors."""


class DimensionError(FaceIQError):
    """Tensor or image shapes are incompatible with the operation."""


class ConfigError(FaceIQError):
    """A configuration value violates an operation's requirements."""


class ContractError(FaceIQError):
    """An operation was called outside its contract (e.g. backward on a non-scalar)."""


class NumericalError(FaceIQError):
    """A non-finite value appeared where finite arithmetic is required."""


class AnnotationMissingError(FaceIQError):
    """A required manifest annotation (face bbox) is absent."""


class FaceTooSmallError(FaceIQError):
    """The annotated face bbox is below the minimum usable side length."""


class MaskMissingError(FaceIQError):
    """The eyes-and-mouth mask is absent and no explicit substitute was given."""


class IncompleteSessionError(FaceIQError):
    """A rating session is missing items and cannot be screened."""

    def __init__(self, missing_ids):
        self.missing_ids = list(missing_ids)
        super().__init__(f"session incomplete; missing items: {self.missing_ids}")


class UndefinedCorrelationError(FaceIQError):
    """Correlation is undefined because one input vector is constant."""


class SingularDesignError(FaceIQError):
    """The regression design matrix is rank deficient."""


class IngestError(FaceIQError):
    """Input records are malformed or missing required fields."""

    def __init__(self, message, offending_ids=()):
        self.offending_ids = list(offending_ids)
        super().__init__(message)


class SizeError(FaceIQError):
    """Too few items to perform the requested partitioning."""


class SequenceError(FaceIQError):
    """A rating was submitted out of order for its session."""


class GateRequiredError(FaceIQError):
    """A formal session was requested before a pilot pass was recorded."""


class ValidationError(FaceIQError):
    """A submitted payload fails field-level validation."""


class ModeError(FaceIQError):
    """The operation does not apply to this session mode."""
