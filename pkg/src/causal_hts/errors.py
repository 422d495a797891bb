"""Exception types raised across the package."""


class CausalHTSError(Exception):
    """Base class for all package errors."""


class ParameterError(CausalHTSError, ValueError):
    """An argument is outside its documented domain."""


class StructureError(CausalHTSError, ValueError):
    """A graph or order violates a structural invariant (e.g. contains a cycle)."""


class DegenerateDataError(CausalHTSError, ValueError):
    """Input data cannot support the requested statistic (e.g. a constant column)."""


class NumericalError(CausalHTSError, ArithmeticError):
    """A linear solve stayed ill-conditioned after regularization."""
