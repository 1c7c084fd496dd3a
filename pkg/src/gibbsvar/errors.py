"""Exception types shared across the package."""


class GibbsvarError(Exception):
    """Base class for all library errors."""


class InvalidEstimateError(GibbsvarError):
    """Canonical parameters fell outside the valid region (theta1 > 0, theta2 < 0).

    Carries the offending theta so callers can flag rather than crash.
    """

    def __init__(self, theta):
        self.theta = theta
        super().__init__(f"theta {tuple(theta)} outside the valid region "
                         "{theta1 > 0, theta2 < 0}")


class SingularSystemError(GibbsvarError):
    """The empirical matrix is singular or too ill-conditioned to solve."""

    def __init__(self, variant, cond=None):
        self.variant = variant
        self.cond = cond
        msg = f"singular empirical system for the {variant} estimator"
        if cond is not None:
            msg += f" (condition number {cond:.3g})"
        super().__init__(msg)


class DivergedError(GibbsvarError):
    """Newton iteration failed to converge; carries the last iterate."""

    def __init__(self, last_iterate, iterations):
        self.last_iterate = last_iterate
        self.iterations = iterations
        super().__init__(f"did not converge after {iterations} iterations")


class InfeasibleDataError(GibbsvarError):
    """A data point has infinite local energy under the fitted basis."""


class InsufficientCellsError(GibbsvarError):
    """Too few grid cells for a covariance estimate."""
