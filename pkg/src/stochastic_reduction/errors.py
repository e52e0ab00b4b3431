"""Exception hierarchy shared by all modules."""


class ReductionError(Exception):
    """Base class for every error raised by this package."""


class NotHermitian(ReductionError, ValueError):
    pass


class NotUnitary(ReductionError, ValueError):
    pass


class NotOrthogonal(ReductionError, ValueError):
    pass


class DimensionMismatch(ReductionError, ValueError):
    pass


class InvalidState(ReductionError, ValueError):
    """State vector or density matrix violates its invariants."""


class ZeroProbabilityOutcome(ReductionError, ValueError):
    pass


class StepRejected(ReductionError, RuntimeError):
    """Pre-renormalization norm drifted too far; the step size is too large."""


class PositivityLost(ReductionError, RuntimeError):
    pass


class InvalidProjector(ReductionError, ValueError):
    pass


class IncompleteFamily(ReductionError, ValueError):
    pass


class InsufficientResolved(ReductionError, RuntimeError):
    pass


class UnresolvedPresent(ReductionError, ValueError):
    pass


class ParseError(ReductionError, ValueError):
    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)


class ValidationError(ReductionError, ValueError):
    """Scenario failed validation; ``problems`` lists every violated invariant."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class ExecutionError(ReductionError, RuntimeError):
    """A scenario run failed; the message names the scenario and mode."""
