"""Exception types raised across the package."""


class SparseFormError(Exception):
    pass


class InvalidInputError(SparseFormError, ValueError):
    pass


class CoplanarBaseError(InvalidInputError):
    def __init__(self, indices, message=None):
        self.indices = tuple(indices)
        super().__init__(
            message
            or f"base set {[i + 1 for i in self.indices]} is coplanar; "
            "call repair_coplanar_base() to grow it into a 3D base"
        )


class UnrepairableBaseError(SparseFormError):
    """All vertices lie in one plane, so no 3D base set exists."""


class InfeasibleSelectionError(SparseFormError):
    pass


class BudgetExceededError(SparseFormError):
    pass


class SingularGradientError(SparseFormError, ArithmeticError):
    pass


class DegenerateAlignmentError(SparseFormError, ArithmeticError):
    pass


class UndefinedMetricError(SparseFormError, ArithmeticError):
    pass


class ScenarioGenerationError(SparseFormError):
    pass
