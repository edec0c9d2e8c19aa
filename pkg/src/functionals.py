"""
Functionals module with the conserved and variational quantities of

    i u_t + Delta u = -|u|^(4/(d-2)) u + |u|^(4/(d-1)) u

for radial data: mass, energy, the scaling derivative K and its parts, the
mountain-flank functional H, the ground state W and the threshold m = E^c(W).
Closed-form initial data live here too, since they are what the exact
scaling phi^lambda(x) = e^(d lambda) phi(e^(2 lambda) x) acts on.
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, replace
from enum import Enum, auto

import numpy as np
from scipy.integrate import quad
from scipy.special import gamma

from src.errors import GridError, SpecError
from src.grid import (
    RadialField,
    RadialGrid,
    integrate,
    laplacian,
    gradient_norm_sq,
    sphere_area,
)

logger = logging.getLogger(__name__)

# mu_underline = min{4, 0, 4d/(d-1)}; defined alongside mu_bar, never used in a bound.
MU_UNDERLINE = 0.0

MIN_THRESHOLD_NODES = 1024
MIN_THRESHOLD_RADIUS = 50.0
MAX_THRESHOLD_RESIDUAL = 1e-3


def mu_bar(dim: int) -> float:
    """mu_bar = max{4, 0, 4d/(d-1)} = 4d/(d-1)."""
    return 4.0 * dim / (dim - 1)


def ground_state_profile(r: np.ndarray, dim: int) -> np.ndarray:
    """Aubin-Talenti bubble W(r) = (1 + r^2 / (d(d-2)))^(-(d-2)/2)."""
    r = np.asarray(r, dtype=float)
    return (1.0 + r**2 / (dim * (dim - 2))) ** (-(dim - 2) / 2.0)


def ground_state_slope(r: np.ndarray, dim: int) -> np.ndarray:
    """W'(r) = -(r/d) (1 + r^2 / (d(d-2)))^(-d/2)."""
    r = np.asarray(r, dtype=float)
    return -(r / dim) * (1.0 + r**2 / (dim * (dim - 2))) ** (-dim / 2.0)


def aubin_talenti_constant(dim: int) -> float:
    """
    Sharp constant C_d^* of ||u||_{2*} <= C_d^* ||grad u||_2.

    C_d^* = (pi d (d-2))^(-1/2) (Gamma(d) / Gamma(d/2))^(1/d).
    """
    return float(
        (np.pi * dim * (dim - 2)) ** -0.5 * (gamma(dim) / gamma(dim / 2.0)) ** (1.0 / dim)
    )


# ---------------------------------------------------------------------------
# Initial-data descriptors
# ---------------------------------------------------------------------------


class FieldSpec(ABC):
    """
    Abstract base class for an initial-data descriptor.

    Closed-form variants can be sampled at any radius and scaled exactly;
    a sampled field can only be passed through.
    """

    closed_form: bool = True

    @property
    @abstractmethod
    def spec_dim(self) -> int:
        """Dimension the descriptor is written for."""

    @abstractmethod
    def profile(self, r: np.ndarray) -> np.ndarray:
        """
        Evaluate the closed form.

        Args:
            r: Radii, r >= 0

        Returns:
            Complex samples
        """


@dataclass(frozen=True)
class GaussianSpec(FieldSpec):
    """u(r) = a exp(-r^2 / width^2) in R^dim."""

    dim: int
    amplitude: complex
    width: float

    def __post_init__(self):
        if not (np.isfinite(self.width) and self.width > 0):
            raise SpecError(f"Gaussian width must be positive, got {self.width}")
        if not np.isfinite(self.amplitude):
            raise SpecError("Gaussian amplitude must be finite")

    @property
    def spec_dim(self) -> int:
        return self.dim

    def profile(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        return complex(self.amplitude) * np.exp(-(r**2) / self.width**2)


@dataclass(frozen=True)
class ScaledGroundStateSpec(FieldSpec):
    """u(r) = a W^lambda(r) = a e^(d lambda) W(e^(2 lambda) r) in R^dim."""

    dim: int
    amplitude: complex
    lam: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.lam) and np.isfinite(self.amplitude)):
            raise SpecError("ground-state amplitude and lambda must be finite")

    @property
    def spec_dim(self) -> int:
        return self.dim

    def profile(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        lam = self.lam
        return (
            complex(self.amplitude)
            * np.exp(self.dim * lam)
            * ground_state_profile(np.exp(2.0 * lam) * r, self.dim)
        )


@dataclass(frozen=True)
class SampledSpec(FieldSpec):
    """A field already on a grid; evaluate() passes it through."""

    field: RadialField

    closed_form = False

    @property
    def spec_dim(self) -> int:
        return self.field.grid.dim

    def profile(self, r: np.ndarray) -> np.ndarray:
        raise SpecError("a sampled field has no closed form")


class FieldSpecFactory:
    """
    Factory class for initial-data descriptors.
    """

    @staticmethod
    def create_gaussian(dim: int, amplitude: float, width: float, phase: float = 0.0) -> GaussianSpec:
        """Create a Gaussian with complex amplitude amplitude * e^(i phase)."""
        return GaussianSpec(dim=dim, amplitude=amplitude * np.exp(1j * phase), width=width)

    @staticmethod
    def create_ground_state(dim: int, amplitude: float, lam: float = 0.0, phase: float = 0.0) -> ScaledGroundStateSpec:
        """Create c W^lambda with complex amplitude amplitude * e^(i phase)."""
        return ScaledGroundStateSpec(dim=dim, amplitude=amplitude * np.exp(1j * phase), lam=lam)

    @staticmethod
    def create_sampled(f: RadialField) -> SampledSpec:
        """Wrap a field already on a grid."""
        return SampledSpec(field=f)


def evaluate(spec: FieldSpec, grid: RadialGrid) -> RadialField:
    """
    Sample a descriptor on a grid.

    Raises:
        SpecError: If the descriptor was written for another dimension, or a
            sampled field lives on another grid
    """
    if spec.spec_dim != grid.dim:
        raise SpecError(f"descriptor is for d={spec.spec_dim}, grid has d={grid.dim}")
    if isinstance(spec, SampledSpec):
        if not spec.field.grid.same_as(grid):
            raise SpecError("sampled field lives on a different grid")
        return spec.field
    return RadialField(grid, spec.profile(grid.nodes))


def scale(spec: FieldSpec, lam: float) -> FieldSpec:
    """
    Exact descriptor of phi^lambda(x) = e^(d lambda) phi(e^(2 lambda) x).

    Raises:
        SpecError: For sampled fields, which have no exact scaling on a fixed grid
    """
    if isinstance(spec, GaussianSpec):
        return replace(
            spec,
            amplitude=complex(spec.amplitude) * np.exp(spec.dim * lam),
            width=spec.width * np.exp(-2.0 * lam),
        )
    if isinstance(spec, ScaledGroundStateSpec):
        return replace(spec, lam=spec.lam + lam)
    raise SpecError("only closed-form descriptors can be scaled exactly")


# ---------------------------------------------------------------------------
# Functionals
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FunctionalReport:
    """
    Every conserved and variational functional of one field.

    All quantities derive from four integrals (mass, gradient, critical and
    subcritical potential), so exact scaling can be applied to a report
    without touching the grid.
    """

    dim: int
    mass: float
    energy: float
    critical_energy: float
    k: float
    k_quadratic: float
    k_nonlinear: float
    k_critical: float
    h: float
    grad_norm_sq: float
    norm_critical: float
    norm_subcritical: float
    momentum: tuple

    @classmethod
    def from_integrals(
        cls, dim: int, l2_sq: float, grad_sq: float, crit: float, subcrit: float
    ) -> "FunctionalReport":
        """
        Assemble a report from the four basic integrals.

        Args:
            dim: Spatial dimension
            l2_sq: integral of |u|^2
            grad_sq: integral of |grad u|^2
            crit: integral of |u|^(2d/(d-2))
            subcrit: integral of |u|^((2d+2)/(d-1))
        """
        d = dim
        k_quadratic = 2.0 * grad_sq
        k_nonlinear = -2.0 * crit + (2.0 * d / (d + 1)) * subcrit
        critical_energy = 0.5 * grad_sq - (d - 2) / (2.0 * d) * crit
        return cls(
            dim=d,
            mass=0.5 * l2_sq,
            energy=critical_energy + (d - 1) / (2.0 * d + 2.0) * subcrit,
            critical_energy=critical_energy,
            k=k_quadratic + k_nonlinear,
            k_quadratic=k_quadratic,
            k_nonlinear=k_nonlinear,
            k_critical=2.0 * grad_sq - 2.0 * crit,
            h=(grad_sq + crit) / (2.0 * d),
            grad_norm_sq=grad_sq,
            norm_critical=crit,
            norm_subcritical=subcrit,
            # the vector integrand u_bar grad u is odd for radial u
            momentum=tuple(0.0 for _ in range(d)),
        )

    @property
    def mu_bar(self) -> float:
        return mu_bar(self.dim)

    @property
    def h_scaling_derivative(self) -> float:
        """L H = (2/d) int |grad u|^2 + (2/(d-2)) int |u|^(2*), never negative."""
        d = self.dim
        return 2.0 / d * self.grad_norm_sq + 2.0 / (d - 2) * self.norm_critical

    def rescaled(self, lam: float) -> "FunctionalReport":
        """
        Report of phi^lambda from the scaling laws of the four integrals.

        The mass is invariant; the gradient scales by e^(4 lambda), the
        critical integral by e^(4d lambda/(d-2)) and the subcritical one by
        e^(4d lambda/(d-1)).
        """
        d = self.dim
        return FunctionalReport.from_integrals(
            d,
            2.0 * self.mass,
            self.grad_norm_sq * np.exp(4.0 * lam),
            self.norm_critical * np.exp(4.0 * d * lam / (d - 2)),
            self.norm_subcritical * np.exp(4.0 * d * lam / (d - 1)),
        )


def report(f: RadialField) -> FunctionalReport:
    """
    Compute every functional of a field by quadrature.

    The gradient term is the Dirichlet form of the solver's Laplacian, so the
    energy reported along a trace is the one Crank-Nicolson conserves.
    """
    grid = f.grid
    mod = f.modulus
    return FunctionalReport.from_integrals(
        grid.dim,
        integrate(grid, mod**2),
        gradient_norm_sq(f),
        integrate(grid, mod**grid.critical_exponent),
        integrate(grid, mod**grid.subcritical_exponent),
    )


class Membership(Enum):
    """Where a datum sits relative to the threshold."""
    K_PLUS = auto()
    K_MINUS = auto()
    ABOVE_THRESHOLD = auto()


def classify_membership(rep: FunctionalReport, m: float) -> Membership:
    """E < m with K >= 0 is K+, E < m with K < 0 is K-, anything else is above threshold."""
    if rep.energy < m:
        return Membership.K_PLUS if rep.k >= 0 else Membership.K_MINUS
    return Membership.ABOVE_THRESHOLD


# ---------------------------------------------------------------------------
# Ground state and threshold
# ---------------------------------------------------------------------------


def ground_state(grid: RadialGrid) -> RadialField:
    """Samples of W on the grid."""
    if grid.dim < 5:
        logger.warning("ground state requested in d=%d; the threshold theory needs d >= 5", grid.dim)
    return RadialField(grid, ground_state_profile(grid.nodes, grid.dim))


def ground_state_residual(grid: RadialGrid) -> float:
    """
    Max relative residual of -Delta W = W^((d+2)/(d-2)) on r <= r_max / 2.

    Normalized by the max of the right-hand side.
    """
    w = ground_state(grid)
    rhs = w.values.real ** ((grid.dim + 2.0) / (grid.dim - 2.0))
    lhs = -laplacian(w).values.real
    inside = grid.nodes <= grid.r_max / 2.0
    return float(np.max(np.abs(lhs[inside] - rhs[inside])) / np.max(rhs))


def _tail(integrand, r_max: float) -> float:
    value, _ = quad(integrand, r_max, np.inf, limit=200)
    return float(value)


@dataclass(frozen=True)
class ThresholdResult:
    """
    The threshold m = E^c(W) with its cross-checks.

    The integrals of W are completed past r_max with the closed form; the
    grid-only values are kept alongside for comparison with report(W).
    """

    dim: int
    m: float
    grad_w_norm_sq: float
    critical_w_norm: float
    sobolev_constant: float
    pde_residual: float
    kc_of_w: float
    m_closed_form: float
    grid_grad_w_norm_sq: float
    grid_critical_w_norm: float

    @property
    def m_from_sobolev(self) -> float:
        """(1/d) (C_d^*)^(-d) with C_d^* taken from the quadrature of W."""
        return self.sobolev_constant ** (-self.dim) / self.dim

    @property
    def m_from_gradient(self) -> float:
        """(1/d) int |grad W|^2, equal to m through the Pohozaev identity."""
        return self.grad_w_norm_sq / self.dim


def threshold(grid: RadialGrid) -> ThresholdResult:
    """
    Compute m = E^c(W) on an adequate grid.

    Raises:
        GridError: If the grid is below n = 1024 or r_max = 50, or W's PDE
            residual exceeds 1e-3
    """
    if grid.n < MIN_THRESHOLD_NODES or grid.r_max < MIN_THRESHOLD_RADIUS:
        raise GridError(
            f"threshold needs n >= {MIN_THRESHOLD_NODES} and r_max >= {MIN_THRESHOLD_RADIUS:g}, got {grid}"
        )
    residual = ground_state_residual(grid)
    if residual > MAX_THRESHOLD_RESIDUAL:
        raise GridError(f"ground-state residual {residual:.3e} too large on {grid}")

    d = grid.dim
    w = ground_state(grid)
    rep = report(w)
    sigma = sphere_area(d)
    p_crit = grid.critical_exponent

    grad_tail = sigma * _tail(lambda r: ground_state_slope(r, d) ** 2 * r ** (d - 1), grid.r_max)
    crit_tail = sigma * _tail(lambda r: ground_state_profile(r, d) ** p_crit * r ** (d - 1), grid.r_max)
    grad_sq = rep.grad_norm_sq + grad_tail
    crit = rep.norm_critical + crit_tail

    m = 0.5 * grad_sq - (d - 2) / (2.0 * d) * crit
    c_star = aubin_talenti_constant(d)
    result = ThresholdResult(
        dim=d,
        m=m,
        grad_w_norm_sq=grad_sq,
        critical_w_norm=crit,
        sobolev_constant=crit ** (1.0 / p_crit) / np.sqrt(grad_sq),
        pde_residual=residual,
        kc_of_w=2.0 * grad_sq - 2.0 * crit,
        m_closed_form=c_star ** (-d) / d,
        grid_grad_w_norm_sq=rep.grad_norm_sq,
        grid_critical_w_norm=rep.norm_critical,
    )
    logger.debug("threshold on %s: m=%.12g (closed form %.12g)", grid, m, result.m_closed_form)
    return result


def threshold_invariant_errors(result: ThresholdResult) -> dict:
    """
    Relative defects of the ThresholdResult cross-identities.

    Returns:
        Mapping of identity name to its relative (or normalized) defect
    """
    return {
        "m_vs_gradient": abs(result.m - result.m_from_gradient) / abs(result.m),
        "m_vs_sobolev": abs(result.m - result.m_from_sobolev) / abs(result.m),
        "kc_of_w": abs(result.kc_of_w) / result.grad_w_norm_sq,
        "m_vs_closed_form": abs(result.m - result.m_closed_form) / result.m_closed_form,
    }


THRESHOLD_TOLERANCES = {
    "m_vs_gradient": 1e-4,
    "m_vs_sobolev": 1e-4,
    "kc_of_w": 1e-4,
    "m_vs_closed_form": 1e-4,
}


def threshold_holds(result: ThresholdResult) -> bool:
    """Whether every cross-identity is inside its tolerance."""
    errors = threshold_invariant_errors(result)
    return all(errors[name] <= tol for name, tol in THRESHOLD_TOLERANCES.items())
