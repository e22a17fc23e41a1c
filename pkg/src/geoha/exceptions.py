"""Exception hierarchy shared by every arbitration module."""


class GeoHAError(Exception):
    """Base class for all errors raised by :mod:`geoha`."""


class ConfigError(GeoHAError, ValueError):
    """Invalid configuration: bad thresholds, missing baselines, unknown services."""


class ContractViolation(GeoHAError, ValueError):
    """An argument broke an operation's precondition."""


class MonotonicityError(GeoHAError, ValueError):
    """A telemetry sample arrived with a timestamp older than its stream head."""


class OrderingError(GeoHAError, ValueError):
    """A failure event was presented out of timestamp order."""


class UndefinedRatioError(GeoHAError, ZeroDivisionError):
    """Cascade ratio requested for a source that has never failed."""


class QuorumLostError(GeoHAError, RuntimeError):
    """Fewer than two quorum members are alive, so no leader can be elected."""
