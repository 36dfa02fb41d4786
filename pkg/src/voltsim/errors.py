"""Exception hierarchy shared by all voltsim modules."""


class VoltsimError(Exception):
    """Base class for every error raised by voltsim."""


class RangeError(VoltsimError, ValueError):
    """A value lies outside the domain an operation accepts."""


class ProtocolError(VoltsimError):
    """A DRAM command is not legal in the bank's current state."""


class TimingViolation(VoltsimError):
    """A command was issued before its timing constraints allowed."""


class RefreshDeadlineMissed(VoltsimError):
    """Some row went longer than its retention window without a refresh."""


class TraceParseError(VoltsimError, ValueError):
    def __init__(self, path, lineno, message):
        super().__init__(f"{path}:{lineno}: {message}")
        self.path = path
        self.lineno = lineno


class FitError(VoltsimError, ValueError):
    """Loss-model fitting received degenerate training data."""


class ConfigError(VoltsimError, ValueError):
    def __init__(self, key, message):
        super().__init__(f"config key '{key}': {message}")
        self.key = key
