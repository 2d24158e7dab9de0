"""Exception types shared across the engine."""


class StoreError(Exception):
    """Base class for file-format and data-model violations."""


class BadMagicError(StoreError):
    """File does not start with the tensor container magic bytes."""


class TruncatedPayloadError(StoreError):
    """Payload holds fewer elements than the declared shape requires."""


class ShapeMismatchError(StoreError):
    """Declared shape disagrees with the payload (e.g. trailing bytes)."""


class NonFiniteValueError(StoreError):
    """A loaded value is NaN or infinite."""


class FormatError(StoreError):
    """Structurally invalid header, manifest, or record."""


class AlignmentError(StoreError):
    """Sample-id sets requested for alignment share no ids."""


class GeometryError(StoreError):
    """Layer/neuron geometry differs between inputs that must match."""
