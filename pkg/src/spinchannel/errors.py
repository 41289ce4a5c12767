"""Exception taxonomy; the CLI maps each class to a distinct exit code."""


class SpinChannelError(Exception):
    """Base class for all package-specific failures."""


class ConfigError(SpinChannelError):
    """Malformed configuration file or flag set (exit code 2)."""


class CapabilityError(SpinChannelError):
    """Requested problem exceeds a backend's stated limits (exit code 3)."""


class ConvergenceError(SpinChannelError):
    """Evolution failed its convergence certificate (exit code 4)."""


class NumericalError(SpinChannelError):
    """Numerical invariant violated beyond tolerance (exit code 5)."""
