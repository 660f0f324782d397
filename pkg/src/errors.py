"""Exception hierarchy for the solver library."""


class SolverError(Exception):
    """Base class for every error raised by the library."""


class GridError(SolverError, ValueError):
    """Invalid grid sizes, indices or region requests."""


class CoefficientError(SolverError, ValueError):
    """Invalid coefficient data or generator parameters."""


class FactorizationError(SolverError, ArithmeticError):
    """A direct factorization or local solve could not be carried out."""


class EigenSolverError(SolverError, ArithmeticError):
    """A generalized eigenproblem could not be reduced or solved."""


class IndefiniteOperatorError(SolverError, ArithmeticError):
    """PCG met a non-positive curvature or preconditioned residual."""


class ConfigError(SolverError, ValueError):
    """Experiment configuration failed validation."""
