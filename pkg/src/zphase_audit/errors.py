"""Exception types shared across the audit pipeline."""


class AuditError(Exception):
    """Base class for all audit pipeline errors."""


class InvalidGeometryError(AuditError):
    """Reconstruction geometry is unusable (non-positive interval/spacing, non-finite input)."""


class AnnotationParseError(AuditError):
    """Annotation XML could not be parsed at all."""


class MalformedAnnotationError(AuditError):
    """A single annotation violates structural requirements (e.g. no ROIs)."""


class ManifestError(AuditError):
    """Geometry manifest violates the documented JSON schema."""


class DetectionParseError(AuditError):
    """Detection CSV is structurally invalid."""


class ExcludedNoduleError(AuditError):
    """Nodule has no usable diameter and is excluded from ratio analyses."""


class EmptyCellError(AuditError):
    """Statistic requested for an empty cell; the cell is reported as empty, not 0."""


class EmptyConsensusError(AuditError):
    """No annotation cluster reached the reader-consensus threshold."""


class ConfigurationError(AuditError):
    """Inconsistent configuration (condition/interval mismatch, unknown series, ...)."""


class MissingInputError(AuditError):
    """A configured input file or directory does not exist."""
