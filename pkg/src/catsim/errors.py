"""Exception hierarchy shared by all catsim modules."""


class CatError(ValueError):
    """Base class for every error raised by catsim."""


class PoolMismatchError(CatError):
    """Predictions, records or models refer to different question pools."""


class EmptyInputError(CatError):
    pass


class BudgetError(CatError):
    pass


class ContractViolationError(CatError):
    """A session broke the adaptive-session contract (e.g. re-asked a question)."""


class SelectionError(CatError):
    pass


class ParseError(CatError):
    pass


class ShapeError(CatError):
    pass


class DuplicateIdError(CatError):
    pass


class EmptyDatasetError(CatError):
    pass


class InfeasibleSplitError(CatError):
    pass


class SpecError(CatError):
    """Invalid synthetic-generator or experiment configuration."""


class CalibrationError(CatError):
    pass


class DomainError(CatError):
    pass


class ImpossibleEvidenceError(CatError):
    pass


class CoverageError(CatError):
    pass


class SizeError(CatError):
    pass


class ConfigError(CatError):
    pass


class StateError(CatError):
    pass
