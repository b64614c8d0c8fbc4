"""Exception hierarchy shared by every module."""


class DenseRegError(Exception):
    pass


class ShapeError(DenseRegError, ValueError):
    pass


class DomainError(DenseRegError, ValueError):
    pass


class StateError(DenseRegError, RuntimeError):
    pass


class ConfigError(DenseRegError, ValueError):
    pass


class DataError(DenseRegError, ValueError):
    pass


class NumericalError(DenseRegError, ArithmeticError):
    pass


class UndefinedMetricError(DenseRegError, ValueError):
    pass


class RankError(DenseRegError, ArithmeticError):
    pass


class CheckpointError(DenseRegError):
    pass


class ChecksumError(CheckpointError):
    pass


class CheckpointShapeError(CheckpointError, ShapeError):
    pass


class FormatVersionError(CheckpointError):
    pass
