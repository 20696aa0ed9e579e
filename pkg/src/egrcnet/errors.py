"""Exception types raised across the package."""


class EGRCError(Exception):
    """Base class for every typed error raised by egrcnet."""


class FormatError(EGRCError):
    pass


class ShapeError(EGRCError, ValueError):
    pass


class ParameterError(EGRCError, ValueError):
    pass


class EdgeIndexError(EGRCError, IndexError):
    """An edge references a node outside ``[0, n)``."""


class DegenerateRowError(EGRCError, ValueError):
    pass


class ColumnCollapseError(EGRCError, ArithmeticError):
    """A cluster column of the target distribution has zero mass."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class DomainError(EGRCError, ValueError):
    pass


class TrainingDivergedError(EGRCError, ArithmeticError):
    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class CheckpointVersionError(EGRCError):
    pass
