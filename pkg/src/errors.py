class DepositBayesError(Exception):
    """
    Base class for every error raised by the DepositBayes modules.

    Attributes:
        exit_code (int): Process exit status the CLI uses when this error reaches the command boundary.
    """
    exit_code: int = 1


class UsageError(DepositBayesError, ValueError):
    """Invalid arguments or a request the tool refuses to run."""
    exit_code = 2


class DataError(DepositBayesError, ValueError):
    """Input data, files or tables that cannot be used as given."""
    exit_code = 3


class NumericalError(DepositBayesError, ArithmeticError):
    """A numerical routine could not produce a finite, trustworthy answer."""
    exit_code = 4


class MismatchError(DepositBayesError, ValueError):
    """Two artifacts that must agree (dimensions, datasets, encodings) do not."""
    exit_code = 5


# Usage
class TooLarge(UsageError):
    pass


class DimensionTooHigh(UsageError):
    pass


# Data
class UnknownColumn(DataError):
    pass


class MissingField(DataError):
    pass


class UnparseableNumber(DataError):
    pass


class UnknownTargetLabel(DataError):
    pass


class MalformedRow(DataError):
    pass


class SampleTooLarge(DataError):
    pass


class DegenerateClasses(DataError):
    pass


class EmptyTable(DataError):
    pass


class EmptyInput(DataError):
    pass


class UnseenLevel(DataError):
    """
    A categorical level that the training encoding map has never seen.

    Attributes:
        column (str): Name of the categorical column.
        level (str): The unseen level.
    """
    def __init__(self, column: str, level: str) -> None:
        super().__init__(f"Unseen level '{level}' in column '{column}'")
        self.column = column
        self.level = level


class CorruptChainFile(DataError):
    """
    A chain file that cannot be parsed back into draws.

    Attributes:
        offset (int): Byte offset of the first corrupt line.
    """
    def __init__(self, path: str, offset: int, reason: str) -> None:
        super().__init__(f"Corrupt chain file {path} at byte offset {offset}: {reason}")
        self.path = path
        self.offset = offset


class TooFewDraws(DataError):
    pass


# Numerical
class NonFiniteGradient(NumericalError):
    pass


class AdaptationFailure(NumericalError):
    pass


class DegenerateDiagnostic(NumericalError):
    pass


class NonFiniteEvaluation(NumericalError):
    pass


class GridTooCoarse(NumericalError):
    pass


class VarianceBoundViolation(NumericalError):
    pass


# Mismatch
class DimensionMismatch(MismatchError):
    pass


class DatasetMismatch(MismatchError):
    pass


class EncodingMismatch(MismatchError):
    pass
