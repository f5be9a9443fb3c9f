"""Exception hierarchy shared across the package."""


class NavWorldError(Exception):
    """Base class for all package errors."""


class ConfigurationError(NavWorldError):
    """A static setup problem: bad shapes, invalid architecture combos, bad config files."""


class DataError(NavWorldError):
    """Runtime data outside its contract: out-of-range labels, positions inside walls."""


class UsageError(NavWorldError):
    """An API called out of order, e.g. stepping a finished episode."""


class ProtocolError(NavWorldError):
    """Wire-protocol violation; carries the numeric error code when known."""

    def __init__(self, message: str, code: int = 0):
        super().__init__(message)
        self.code = code
