"""Exception types shared across the package."""


class KernelLabError(Exception):
    """Base class for all package errors."""


class FieldEvaluationError(KernelLabError):
    """Evaluation requested at or too close to a declared singular point."""


class GridError(KernelLabError):
    """Invalid grid construction or grid/field mismatch."""


class ConvergenceError(KernelLabError):
    """An iterative estimator hit its iteration cap.

    Carries the last iterate so callers can inspect how far it got.
    """

    def __init__(self, message, last_value=None, history=None):
        super().__init__(message)
        self.last_value = last_value
        self.history = history or []


class BoundaryLeakError(KernelLabError):
    """Too much mass near the box boundary; the domain is too small."""


class CFLError(KernelLabError):
    """Explicit sub-step violates its stability bound."""


class MassDeficitError(KernelLabError):
    """Kernel slice mass too far from 1 for a conservation-law quantity."""


class AdmissibilityError(KernelLabError):
    """G-function evaluation outside the admissible (x, y, beta, t-s) cone."""


class SupercriticalError(KernelLabError):
    """delta_a >= 4: the lower-bound machinery does not apply."""


class CheckFailure(KernelLabError):
    """A pointwise or envelope check failed beyond its tolerance.

    Carries the structured report of the failed check.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ScenarioValidationError(KernelLabError):
    """Scenario regime tag contradicts the declared field metadata."""

    def __init__(self, violations):
        super().__init__("; ".join(violations))
        self.violations = list(violations)
