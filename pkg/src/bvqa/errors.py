"""Shared exception types."""


class BvqaError(Exception):
    """Base class for all toolkit errors."""


class ManifestError(BvqaError):
    """Dataset manifest failed to parse or validate."""


class VideoFormatError(BvqaError):
    """Video container/stream is malformed or unsupported."""


class DegenerateInputError(BvqaError):
    """Input carries no usable signal (constant frame, one-sided data, ...)."""


class FeatureExtractionError(BvqaError):
    """A feature family failed on a given frame or video."""


class LayoutError(BvqaError):
    """Feature vector does not match its registered layout."""
