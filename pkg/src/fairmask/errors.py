"""Exception types raised by fairmask."""


class FairmaskError(Exception):
    """Base class for all fairmask errors."""


class DataError(FairmaskError, ValueError):
    """Raised when an input table cannot be turned into an encoded dataset."""


class MissingColumn(DataError):
    pass


class EmptyAfterCleaning(DataError):
    pass


class SingleGroup(DataError):
    pass


class NonBinaryLabel(DataError):
    pass


class SchemaMismatch(DataError):
    pass


class IoFailure(FairmaskError, OSError):
    pass


class UndefinedRate(FairmaskError, ArithmeticError):
    """A measure needed the positive rate of a group that has no rows."""


class MissingSynthetic(FairmaskError, ValueError):
    pass


class LengthMismatch(FairmaskError, ValueError):
    pass


class PoolTooLarge(FairmaskError, ValueError):
    pass


class DegeneratePopulation(UserWarning):
    """Roulette wheel fell back to uniform draws because all scores were equal."""


class DegenerateColumn(UserWarning):
    """A constant column was excluded from the copula correlation."""


class MissingGroupWarning(UserWarning):
    """A protected group did not appear in a synthetic sample."""
