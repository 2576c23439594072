class VinferError(Exception):
    """Base class for all package errors."""


class ShapeMismatch(VinferError):
    """A tensor does not fit the architecture; names the offending layer."""

    def __init__(self, message, layer=None):
        super().__init__(message)
        self.layer = layer


class ParseError(VinferError):
    """A serialized artifact is malformed; carries the byte offset."""

    def __init__(self, message, offset=None):
        super().__init__(message)
        self.offset = offset


class ProtocolError(VinferError):
    """A protocol session cannot proceed (bad state, refusal, no dispute)."""
