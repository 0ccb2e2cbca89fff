"""Exception hierarchy for the simulation engine."""

from __future__ import annotations


class QCAError(Exception):
    """Root of every error raised by dpqca."""


class InvalidParameters(QCAError, ValueError):
    """A rate table or schedule violates its invariants."""


class NegativeDiscriminant(InvalidParameters):
    """The requested (p, Omega, gamma-) triple has no real, non-negative gamma+."""

    def __init__(self, p: float, omega: float, gamma_minus: float, discriminant: float) -> None:
        super().__init__(
            f"No physical gamma+ for p={p}, omega={omega}, gamma-={gamma_minus}: "
            f"discriminant {discriminant:.6g} < 0"
        )
        self.p = p
        self.omega = omega
        self.gamma_minus = gamma_minus
        self.discriminant = discriminant


class DegenerateP(InvalidParameters):
    """Target occupation p = 1 needs an unbounded excitation rate."""


class IllConditioned(QCAError, ArithmeticError):
    """Matrix exponential error estimate exceeded the tolerance."""


class InvalidDensityMatrix(QCAError, ValueError):
    """Input is not Hermitian with unit trace."""


class NonPhysicalInput(InvalidDensityMatrix):
    """Input density matrix is too far from positive semidefinite."""


class BondOverflow(QCAError, ValueError):
    """Maximum bond dimension below one."""


class SVDFailure(QCAError, RuntimeError):
    """LAPACK could not decompose a two-site block."""


class DimensionOverflow(QCAError, ValueError):
    """Dense oracle asked for more qubits than it can hold."""


class DegenerateNullSpace(QCAError, RuntimeError):
    """Liouvillian has more than one stationary state in the inspected block."""


class NoSignChange(QCAError, ValueError):
    """Late-time curvatures share one sign across the whole grid."""


class InsufficientTail(QCAError, ValueError):
    """Fit window holds fewer points than the estimator needs."""


class CheckpointError(QCAError, RuntimeError):
    """Checkpoint or tensor dump could not be read back."""


class RegaugeFailure(QCAError, RuntimeError):
    """Transfer-map fixed point did not converge during a canonical-form fix."""
