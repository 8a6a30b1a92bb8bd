"""Exception hierarchy shared across the package."""


class NsmiError(Exception):
    """Base class for all package errors."""


class ParameterError(NsmiError, ValueError):
    """An argument is outside its documented domain."""


class ShapeError(NsmiError, ValueError):
    """Array arguments have inconsistent shapes."""


class ConfigError(NsmiError, ValueError):
    """Invalid or contradictory run configuration."""


class FileFormatError(NsmiError):
    """An on-disk array or its JSON sidecar could not be parsed."""


class ConvergenceError(NsmiError):
    """Iterative solver exhausted its budget before reaching tolerance."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class DenoiserError(NsmiError):
    """Base class for external denoiser failures."""


class ProtocolError(DenoiserError):
    """Wire protocol violation (bad magic, version, or framing).

    ``offending_bytes`` holds the raw prefix that failed to parse so it can
    be quoted in diagnostics.
    """

    def __init__(self, message, offending_bytes=b""):
        super().__init__(message)
        self.offending_bytes = offending_bytes


class RemoteDenoiserError(DenoiserError):
    """The denoiser endpoint answered with an error status."""


class ConnectionLostError(DenoiserError):
    """The denoiser endpoint closed the connection mid-exchange."""


class DenoiserTimeoutError(DenoiserError):
    """The denoiser endpoint did not answer within the deadline."""
