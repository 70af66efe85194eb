"""Exception hierarchy shared by the simulator modules."""


class MQKAError(Exception):
    """Base class for all simulator errors."""


class ConfigurationError(MQKAError, ValueError):
    """Invalid protocol, scenario, or grid configuration."""


class ProtocolViolation(MQKAError):
    """A participant deviated from the message format (e.g. a bogus decoy announcement)."""


class ScheduleViolation(MQKAError):
    """A participant acted on a sequence it is not scheduled to hold."""


class StateError(MQKAError):
    """An operation was called in the wrong session phase."""


class StrategyError(MQKAError):
    """An adversary strategy asked for information it cannot have."""


class DomainError(MQKAError, ValueError):
    """Arithmetic outside the domain of a formula."""


class ResourceError(MQKAError):
    """A sweep grid exceeds the configured size limit."""


class UsageError(MQKAError):
    """Bad command-line or report-format usage."""
