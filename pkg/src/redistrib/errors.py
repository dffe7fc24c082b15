"""Shared exception types."""


class ContractViolation(ValueError):
    """An argument breaks a documented precondition."""


class ParseError(ValueError):
    """A mechanism/profile file is malformed; message carries the position."""


class NumericalError(ArithmeticError):
    """A non-finite value appeared mid-computation."""


class SolverError(RuntimeError):
    """The LP solver exceeded its cycling guard or reached an invalid state."""


class RefusalError(RuntimeError):
    """A brute-force request exceeds the combinatorial size guard."""
