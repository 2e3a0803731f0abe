"""Exception hierarchy shared across the daemon and the compiler."""


class RdaError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(RdaError):
    """Input or corpus data violates a documented invariant."""


class PersistenceError(RdaError):
    """A journal write could not be completed safely."""


class ProtocolError(RdaError):
    """A client message or session event is illegal in the current state."""


class ConfigError(RdaError):
    """Configuration file or environment is unusable."""


class MediaError(RdaError):
    """The external transcoder is missing or failed."""


class TranscoderNotFound(MediaError):
    """The configured transcoder/probe command cannot be executed at all."""


class ObsError(RdaError):
    """Base class for OBS remote-control failures."""


class ObsConnectError(ObsError):
    """OBS is unreachable or did not answer in time."""


class ObsAuthError(ObsError):
    """OBS rejected our credentials."""


class ObsProtocolError(ObsError):
    """OBS sent something we cannot work with, or rejected a request."""
