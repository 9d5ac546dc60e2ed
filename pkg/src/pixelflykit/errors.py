"""Exception types. All domain errors derive from :class:`PixelflyError`."""


class PixelflyError(ValueError):
    """Base class for domain errors (bad dimensions, infeasible budgets, ...)."""


class MaskError(PixelflyError):
    """Invalid mask geometry or pattern parameters."""


class BudgetError(PixelflyError):
    """A compute or parameter budget cannot be met."""


class InfeasibleError(PixelflyError):
    """No candidate satisfies the constraints."""


class DivergenceError(PixelflyError):
    """Training produced a non-finite loss."""

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


class FormatError(PixelflyError):
    """Malformed input file."""
