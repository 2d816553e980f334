"""Exception types raised across the package."""


class SSMPruneError(Exception):
    """Base class for every error raised by ssm_prune."""


class StructuralError(SSMPruneError, ValueError):
    """Shapes, lengths or dimensions do not line up."""


class DomainError(SSMPruneError, ValueError):
    """A value lies outside the range an operation accepts."""


class UnsupportedModeError(SSMPruneError):
    """The operation is not defined for the requested scan mode."""


class ConfigError(SSMPruneError):
    """A configuration file or environment variable is invalid."""
