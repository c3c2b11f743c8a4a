"""Exception types shared across the pipeline."""


class ItdtError(Exception):
    """Base class for all pipeline errors."""


class EmptyInput(ItdtError):
    """Raised when a text is empty after whitespace normalization."""


class SequenceTooLong(ItdtError):
    """Raised when a token sequence exceeds the model's maximum length."""


class InvalidPosition(ItdtError):
    """Raised for masking positions outside [1, n) (position 0 holds CLS)."""


class DegenerateLabels(ItdtError):
    """Raised when a training set contains fewer than two classes."""


class InvalidModel(ItdtError):
    """Raised when model parameters are missing or non-finite."""


class FeatureSchemaMismatch(ItdtError):
    """Raised when a feature vector's schema hash does not match the detector's."""


class EmptyFeatureSpace(ItdtError):
    """Raised when cleaning drops every feature column."""


class ResourcesMissing(ItdtError):
    """Raised when substitution candidates are requested with no resources loaded."""


class NotPending(ItdtError):
    """Raised when resolving a queue item that is missing or already resolved."""
