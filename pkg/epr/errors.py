class EPRError(Exception):
    """Base class for every error raised by the epr package."""


class GeometryError(EPRError, ValueError):
    """Non-finite coordinates/angles or a point outside the unit disk."""


class ConfigError(EPRError, ValueError):
    """Invalid run configuration (flags, config file or environment)."""


class SamplerError(EPRError, RuntimeError):
    """The disk sampler hit its rejection cap; the generator is broken."""


class ProtocolError(EPRError, RuntimeError):
    """A role received a message it must not accept at this point of a run."""


class DecodeError(ProtocolError):
    """A wire line failed strict decoding."""

    def __init__(self, message: str, field: str = None):
        self.field = field
        if field is not None:
            message = f"{message} (field '{field}')"
        super().__init__(message)


class VerificationError(EPRError, AssertionError):
    """A recomputed report value or an audit did not match."""
