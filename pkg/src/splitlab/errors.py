"""Exception taxonomy shared by every splitlab module.

CLI exit codes map onto these groups: validation errors exit 1, network
failures exit 2, protocol violations exit 3, HE precision/depth errors exit 4.
"""


class SplitLabError(Exception):
    """Base class for all splitlab errors."""


# --- parameter / input validation -------------------------------------------

class ParameterError(SplitLabError):
    """Invalid scheme, model, or CLI parameters."""


class CapacityError(SplitLabError):
    """Vector does not fit in the available plaintext slots."""


class ShapeError(SplitLabError):
    """Tensor shapes do not compose."""


class FormatError(SplitLabError):
    """Malformed input file (CSV row, checkpoint, config)."""


# --- HE contract violations ---------------------------------------------------

class LevelError(SplitLabError):
    """Operands at different levels, or a level outside the prime chain."""


class ScaleError(SplitLabError):
    """Operand scales differ by more than the allowed relative tolerance."""


class DepthError(SplitLabError):
    """Prime chain exhausted: no middle prime left to rescale into."""


class RotationKeyError(SplitLabError):
    """Requested rotation step has no key-switching key."""


class ContextError(SplitLabError):
    """Ciphertext/plaintext does not belong to this context."""


class PrecisionError(SplitLabError):
    """Decrypted values are non-finite or out of the trusted range."""


# --- serialization / wire -----------------------------------------------------

class SerializationError(SplitLabError):
    """Truncated, corrupt, or version-mismatched serialized bytes."""


class ProtocolError(SplitLabError):
    """Wire frame or message sequence violates the protocol."""


class PayloadSizeError(ProtocolError):
    """Frame payload exceeds the configured maximum."""


class TruncationError(ProtocolError):
    """Connection closed mid-frame."""


class SyncError(ProtocolError):
    """Client and server disagree on a synchronized training parameter."""


# --- attack -------------------------------------------------------------------

class SingularMatrixError(SplitLabError):
    """Gradient matrix too ill-conditioned to invert."""
