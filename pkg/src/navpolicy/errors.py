"""Exception types raised across the package."""


class NavPolicyError(Exception):
    """Base class for all package errors."""


class SkeletonMismatch(NavPolicyError):
    pass


class EmptyGraph(NavPolicyError):
    pass


class UnknownNode(NavPolicyError, KeyError):
    pass


class ExhaustedAttempts(NavPolicyError):
    """Raised when production cannot find enough valid children."""

    def __init__(self, message, found=0, attempts=0):
        super().__init__(message)
        self.found = found
        self.attempts = attempts


class ScenarioInvalid(NavPolicyError, ValueError):
    """Scenario failed validation. ``field`` names the offending key path."""

    def __init__(self, message, field=None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field


class UnreachableItem(NavPolicyError):
    pass


class Unreachable(NavPolicyError):
    def __init__(self, message, leg=None):
        super().__init__(message)
        self.leg = leg


class EmptySeries(NavPolicyError, ValueError):
    pass
