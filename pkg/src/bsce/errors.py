"""Exception types raised across the package."""


class BsceError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(BsceError, ValueError):
    pass


class ClassIndexError(BsceError, IndexError):
    pass


class ShapeError(BsceError, ValueError):
    pass


class ConfigError(BsceError, ValueError):
    pass


class InvalidSpecError(ConfigError):
    """Dataset specification that cannot be realised."""


class InfiniteLossError(BsceError, ArithmeticError):
    """Cross entropy with target mass on a zero-probability class."""


class TrainingDivergedError(BsceError, ArithmeticError):
    def __init__(self, epoch, message=None):
        self.epoch = epoch
        super().__init__(message or f"training diverged at epoch {epoch}: non-finite loss")


class PersistenceError(BsceError):
    """Base class for file read/write failures."""


class StorageIOError(PersistenceError, OSError):
    pass


class CorruptDataError(PersistenceError):
    pass


class VersionMismatchError(PersistenceError):
    pass
