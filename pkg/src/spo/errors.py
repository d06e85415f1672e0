"""Exception types shared across the package."""


class SpoError(Exception):
    """Base class for all package errors."""


class DomainError(SpoError, ValueError):
    """Invalid grid, support region, or potential."""


class ShiftHitsSpectrum(SpoError):
    """A shifted factorization broke down because the shift is (numerically) an eigenvalue."""

    def __init__(self, theta: float):
        super().__init__(f"shift {theta!r} hits the spectrum; retry with a jittered shift")
        self.theta = theta


class SolverError(SpoError, RuntimeError):
    """Eigensolver failed to converge or produced inconsistent output."""

    def __init__(self, message: str, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class NonsmoothPoint(SpoError):
    """Eigenvalue sensitivity requested at a clustered (non-simple) eigenvalue."""


class NoBoundState(SpoError):
    """An operation needed the ground state but the negative spectrum is empty."""


class NotApplicable(SpoError):
    """Inequality or check is outside its validity range (e.g. CLR for d < 3)."""


class CostSpecError(SpoError, ValueError):
    """Invalid cost functional specification."""


class AdmissibleSetError(SpoError, ValueError):
    """Invalid or infeasible admissible-set definition."""


class ConfigError(SpoError, ValueError):
    """Run configuration failed to parse or validate."""
