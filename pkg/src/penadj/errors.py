"""Exception types raised across the package."""


class PenadjError(Exception):
    """Base class for all package errors."""


class RankDeficiencyError(PenadjError):
    """A least-squares system is singular and no fallback was allowed."""


class NumericalError(PenadjError):
    """A factorization or solve failed at machine precision."""


class DegenerateDfError(PenadjError):
    """Residual degrees of freedom are not positive."""


class NoActiveVariablesError(PenadjError):
    """The initial fit of the adaptive stage selected nothing."""


class BudgetExceededError(PenadjError):
    """Exhaustive enumeration would visit too many assignments."""

    def __init__(self, count, budget):
        super().__init__(
            f"enumeration needs {count} assignments, budget is {budget}")
        self.count = count
        self.budget = budget
