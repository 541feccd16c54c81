"""Exception and warning types shared across the package."""


class BGFormulaError(Exception):
    """Base class for all package errors."""


# -- data validation ---------------------------------------------------------

class DataValidationError(BGFormulaError, ValueError):
    pass


class MalformedRow(DataValidationError):
    pass


class OrderingViolation(DataValidationError):
    pass


class SchemaMismatch(DataValidationError):
    pass


class EmptyRiskSet(DataValidationError):
    pass


class InsufficientTransitions(DataValidationError):
    pass


class MissingScores(BGFormulaError, ValueError):
    pass


class MissingTailoring(BGFormulaError, ValueError):
    pass


class RegimeKindMismatch(BGFormulaError, TypeError):
    pass


class EmptyCell(BGFormulaError, ValueError):
    """A conditional cell required by the plug-in g-formula has no subjects."""

    def __init__(self, history, what="hazard"):
        self.history = history
        super().__init__(f"no subjects in {what} cell for history {history}")


class TruthUnavailable(BGFormulaError, ValueError):
    pass


class ConfigError(BGFormulaError, ValueError):
    pass


# -- numerical ---------------------------------------------------------------

class NumericalError(BGFormulaError, ArithmeticError):
    pass


class EmptyData(NumericalError):
    pass


class DrawOutOfRange(BGFormulaError, IndexError):
    pass


class WidthMismatch(BGFormulaError, ValueError):
    pass


class SeparationDetected(NumericalError):
    pass


class SingularDesign(NumericalError):
    pass


# -- warnings ----------------------------------------------------------------

class DegenerateResponseWarning(UserWarning):
    pass


class AllOneClassWarning(UserWarning):
    pass


class PositivityWarning(UserWarning):
    pass
