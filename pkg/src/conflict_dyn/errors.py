"""Exception hierarchy shared by every module."""


class ConflictDynError(Exception):
    """Base class for all package errors."""


class InvalidParamsError(ConflictDynError, ValueError):
    """Parameters violate a documented invariant."""


class InvalidInputError(ConflictDynError, ValueError):
    """An argument lies outside the domain of an operation."""


class DegenerateStateError(ConflictDynError, ValueError):
    """A state where a formula is undefined (e.g. the singular control at u <= 0)."""


class RegimeError(ConflictDynError, ValueError):
    """The operation is not defined in the requested parameter regime."""


class RangeError(ConflictDynError, ValueError):
    """A tuning constant lies outside its admissible range."""


class PreconditionError(ConflictDynError, ValueError):
    """The start point does not satisfy the membership required by a construction."""


class NumericalError(ConflictDynError, RuntimeError):
    """Generic numerical failure."""


class BudgetError(NumericalError):
    """The step budget was exhausted.

    Attributes
    ----------
    trajectory : Trajectory or None
        The partial path integrated before the budget ran out.
    """

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


class TraceError(NumericalError):
    """A separatrix branch failed to reach its expected endpoint."""


class InfeasibleError(ConflictDynError):
    """No admissible strategy reaches extinction within the allowed horizon."""


class SynthesisError(ConflictDynError):
    """A constructive search exhausted its budget.

    Attributes
    ----------
    diagnostics : dict
        Partial information collected before giving up.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class ConfigError(ConflictDynError, ValueError):
    """A run configuration is missing a key, has an unknown key or a malformed value."""
