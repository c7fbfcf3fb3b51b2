"""Exception types raised by the simulator and planner."""


class MamiError(Exception):
    """Base class for all package errors."""


class RankDeficient(MamiError):
    """A channel matrix lost column rank (pivot collapsed during factorization)."""


class SingularDiagonal(MamiError):
    """A diagonal that must be inverted has a (near) zero entry."""


class DimensionMismatch(MamiError, ValueError):
    pass


class LengthMismatch(MamiError, ValueError):
    pass


class ScheduleError(MamiError, ValueError):
    """A frame schedule string or structure violates the framing rules."""


class NoRoot(MamiError, ValueError):
    pass


class InvalidRoot(MamiError, ValueError):
    pass


class NoPeak(MamiError):
    """Synchronization found no correlation peak above the detection threshold."""


class ZeroPilot(MamiError, ValueError):
    pass


class BufferOverrun(MamiError):
    """A requested CSI trace does not fit in the recorder's capacity."""


class Infeasible(MamiError):
    """No partition size satisfies the hardware constraints."""


class NoTurnaround(MamiError, ValueError):
    """The schedule contains no UL pilot followed by a DL symbol."""


class ConfigError(MamiError, ValueError):
    pass
