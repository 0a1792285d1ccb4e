"""Exception hierarchy shared by every module."""


class RasSwitchError(Exception):
    """Base class for all package errors."""


class CaseParseError(RasSwitchError, ValueError):
    """Case text does not match the JSON case schema."""


class CaseIntegrityError(RasSwitchError, ValueError):
    """Case is well-formed but internally inconsistent (dangling or duplicate ids)."""


class UsageError(RasSwitchError, ValueError):
    """An operation was called with arguments outside its contract."""


class PolicyUnavailableError(RasSwitchError):
    """A remedial action cannot be applied in the current state (e.g. no islanding level left)."""


class SimulationFatalError(RasSwitchError):
    """The experiment cannot start, e.g. the base case does not solve."""
