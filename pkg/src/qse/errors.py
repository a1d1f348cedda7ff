"""Exceptions shared across solvers."""


class NumericalAbort(RuntimeError):
    """A run left its validity envelope (instability, basis leakage)."""


class InvariantViolation(RuntimeError):
    """A monitored identity exceeded its configured tolerance."""
