"""Exception taxonomy shared by all fese modules."""


class FeseError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(FeseError):
    """Bit-vector lengths disagree or are invalid."""


class ParameterError(FeseError):
    """An argument is outside its documented domain."""


class ConfigError(FeseError):
    """A configuration file is malformed or inconsistent."""


class FormatError(FeseError):
    """A file or wire payload does not parse."""


class ProtocolError(FeseError):
    """The peer violated the message contract."""


class TransportError(ProtocolError):
    """The byte stream ended or broke mid-frame."""


class BucketOverflowError(ProtocolError):
    """A bucket has no free slot left."""

    def __init__(self, bucket: int, message: str | None = None):
        self.bucket = bucket
        super().__init__(message or f"bucket {bucket} is full")


class IndexInconsistencyError(ProtocolError):
    """A retrieved identifier has no backing data record."""


class DecryptionError(FeseError):
    """Authenticated decryption failed (wrong key or corrupt data)."""


class CorruptShareError(ProtocolError):
    """Recombined shares do not decode to a valid identifier."""
