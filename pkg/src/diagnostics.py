"""
Diagnostics module with the monitors applied to fields and traces:
localized virial identities, exterior energy, the truncated position,
space-time norms and the blow-up / dispersion classifier.
"""

import logging
from dataclasses import dataclass
from enum import Enum, auto
from typing import TYPE_CHECKING, Optional, Tuple

import numpy as np

from src.cutoffs import CutoffFactory, CutoffKind
from src.errors import FieldError
from src.grid import (
    RadialField,
    RadialGrid,
    edge_weights,
    gradient_density,
    gradient_norm_sq,
    sphere_area,
)

if TYPE_CHECKING:
    from src.functionals import FunctionalReport
    from src.solver import SimulationTrace

logger = logging.getLogger(__name__)

FIT_FRACTION = 0.25
FIT_MIN_POINTS = 20
SATURATION_TOL = 0.01


def spacetime_exponents(dim: int) -> Tuple[float, float]:
    """q1 = 2(d+2)/(d-2) and q2 = 2(d+2)/(d-1)."""
    return 2.0 * (dim + 2) / (dim - 2), 2.0 * (dim + 2) / (dim - 1)


@dataclass(frozen=True)
class VirialSample:
    """
    V_R and the right-hand sides of its first two time derivatives.

    tail_term is dt2_v - k_term, the part of the second identity coming from
    where phi_R differs from |x|^2; tail_bound bounds it by absolute values.
    magnitude is the sum of the absolute values of the four integrals making
    up dt2_v, the natural scale for comparing it with a finite difference.
    """

    R: float
    v: float
    dt_v: float
    dt2_v: float
    k_term: float
    tail_term: float
    tail_bound: float
    magnitude: float


def _masked_integral(grid: RadialGrid, samples: np.ndarray, mask: np.ndarray) -> float:
    return float(np.dot(grid.weights[mask], samples[mask]))


def _density_slope(f: RadialField) -> np.ndarray:
    slope = np.gradient(f.modulus**2, f.grid.dr, edge_order=2)
    slope[0] = 0.0
    return slope


def virial(f: RadialField, R: float, cutoff: CutoffKind = CutoffKind.QUADRATIC_CORE) -> VirialSample:
    """
    Localized virial quantities of a radial field.

        V_R    = int phi_R |u|^2
        dt_v   = 2 Im int phi_R' conj(u) u_r
        dt2_v  = 4 int phi_R'' |u_r|^2 + int (Delta phi_R)' (|u|^2)'
                 - 4/d int Delta phi_R |u|^(2*) + 4/(d+1) int Delta phi_R |u|^p2

    dt_v is taken in the edge form 2 sum_e c_e (phi_{i+1} - phi_i) Im(conj(u_i) u_{i+1}),
    with c_e the edge weights of the solver's Laplacian; it is the exact
    derivative of V_R under the semi-discrete linear flow and vanishes for
    real fields. The bilaplacian term is integrated by parts.

    Raises:
        ValueError: Unless 0 < R <= r_max / 3
    """
    grid = f.grid
    if not 0 < R <= grid.r_max / 3.0:
        raise ValueError(f"virial radius {R:g} outside (0, r_max/3]")
    d = grid.dim
    w = grid.weights
    r = grid.nodes
    u = f.values
    mod = f.modulus
    grad_sq = gradient_density(f)
    crit = mod**grid.critical_exponent
    subcrit = mod**grid.subcritical_exponent
    density_slope = _density_slope(f)

    weight = CutoffFactory.create(cutoff)
    phi, _, d2, _, _ = weight.derivatives(r, R)
    lap, _ = weight.laplacians(r, R, d)
    slope = weight.laplacian_slope(r, R, d)

    v = float(np.dot(w, phi * mod**2))
    current = np.imag(np.conj(u[:-1]) * u[1:])
    dt_v = 2.0 * float(np.dot(edge_weights(grid), np.diff(phi) * current))
    terms = (
        4.0 * d2 * grad_sq,
        slope * density_slope,
        -(4.0 / d) * lap * crit,
        (4.0 / (d + 1)) * lap * subcrit,
    )
    integrals = [float(np.dot(w, term)) for term in terms]
    dt2_v = sum(integrals)
    k_term = float(np.dot(w, 8.0 * grad_sq - 8.0 * crit + (8.0 * d / (d + 1)) * subcrit))
    tail_bound = float(
        np.dot(
            w,
            4.0 * np.abs(d2 - 2.0) * grad_sq
            + np.abs(slope * density_slope)
            + (4.0 / d) * np.abs(lap - 2.0 * d) * crit
            + (4.0 / (d + 1)) * np.abs(lap - 2.0 * d) * subcrit,
        )
    )
    return VirialSample(
        R=float(R), v=v, dt_v=dt_v, dt2_v=dt2_v, k_term=k_term,
        tail_term=dt2_v - k_term, tail_bound=tail_bound,
        magnitude=float(sum(abs(x) for x in integrals)),
    )


def local_virial_bound(f: RadialField, R: float) -> float:
    """
    Cauchy-Schwarz bound C R M(u)^(1/2) ||grad u||_2 on |dt_v| for the
    mass-localizing weight, with C = 2 sqrt(2) sup|phi_R'| / R.
    """
    grid = f.grid
    constant = 2.0 * np.sqrt(2.0) * CutoffFactory.create(CutoffKind.MASS_LOCALIZING).gradient_sup()
    mass = 0.5 * float(np.dot(grid.weights, f.modulus**2))
    return float(constant * R * np.sqrt(mass) * np.sqrt(gradient_norm_sq(f)))


def exterior_energy(f: RadialField, R: float) -> float:
    """
    int_{|x| >= R} |grad u|^2 + |u|^(2*) + |u|^p2.

    Raises:
        ValueError: Unless 0 < R < r_max
    """
    grid = f.grid
    if not 0 < R < grid.r_max:
        raise ValueError(f"exterior radius {R:g} outside (0, r_max)")
    mod = f.modulus
    density = gradient_density(f) + mod**grid.critical_exponent + mod**grid.subcritical_exponent
    return _masked_integral(grid, density, grid.nodes >= R)


def interior_critical_mass(f: RadialField, R: float) -> float:
    """int_{|x| <= R} |u|^(2*)."""
    grid = f.grid
    return _masked_integral(grid, f.modulus**grid.critical_exponent, grid.nodes <= R)


@dataclass(frozen=True)
class PositionSample:
    """Truncated position X_R; for radial fields it vanishes by symmetry."""

    vector: Tuple[float, ...]
    by_symmetry: bool


def truncated_position(f: RadialField, R: float) -> PositionSample:
    """int x phi(|x|/R) |u|^2 dx, whose integrand is odd for radial u."""
    return PositionSample(vector=tuple(0.0 for _ in range(f.grid.dim)), by_symmetry=True)


def radial_sobolev_ratio(f: RadialField, R: float) -> float:
    """
    Constant c in sup_{r >= R} |u| <= c R^(-(d-1)/2) ||u||_{L2(r>=R)}^(1/2)
    ||grad u||_{L2(r>=R)}^(1/2), as realized by f. 0 if the tail vanishes.
    """
    grid = f.grid
    outside = grid.nodes >= R
    mod = f.modulus
    l2 = np.sqrt(_masked_integral(grid, mod**2, outside))
    grad = np.sqrt(_masked_integral(grid, gradient_density(f), outside))
    denominator = np.sqrt(l2 * grad)
    if denominator == 0:
        return 0.0
    return float(np.max(mod[outside]) * R ** ((grid.dim - 1) / 2.0) / denominator)


def radial_sobolev_constant(dim: int) -> float:
    """sqrt(2 / |S^(d-1)|), a valid c in radial_sobolev_ratio for every radial field."""
    return float(np.sqrt(2.0 / sphere_area(dim)))


@dataclass(frozen=True)
class GlasseyCheck:
    """
    The rewriting of 4K through the energy and, for K < 0, the chain
    m <= H(u) < int |u|^(2*) / d.
    """

    identity_defect: float
    h_below_critical: Optional[bool]
    h_above_threshold: Optional[bool]


def glassey_bound(rep: "FunctionalReport", m: Optional[float] = None, tol: float = 1e-6) -> GlasseyCheck:
    """
    Check 4K = 16d/(d-2) E - 16/(d-2) ||grad u||^2 - 8d/((d+1)(d-2)) ||u||_p2^p2.

    The chain is only evaluated (otherwise None) when K < 0; the lower link
    needs m.
    """
    d = rep.dim
    rhs = (
        16.0 * d / (d - 2) * rep.energy
        - 16.0 / (d - 2) * rep.grad_norm_sq
        - 8.0 * d / ((d + 1) * (d - 2)) * rep.norm_subcritical
    )
    scale = max(abs(4.0 * rep.k), 8.0 * rep.grad_norm_sq, 1e-300)
    defect = abs(4.0 * rep.k - rhs) / scale
    below = above = None
    if rep.k < 0:
        below = rep.h < rep.norm_critical / d
        if m is not None:
            above = rep.h >= m * (1.0 - tol)
    return GlasseyCheck(identity_defect=defect, h_below_critical=below, h_above_threshold=above)


# ---------------------------------------------------------------------------
# Trace diagnostics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpacetimeNorms:
    """Diagonal L^q_{t,x} norms; st = max(w1, w2)."""

    w1: float
    w2: float
    st: float


def spacetime_norms(trace: "SimulationTrace", grid: RadialGrid, until: Optional[float] = None) -> SpacetimeNorms:
    """
    w_k = (int_0^T int |u|^{q_k} dx dt)^(1/q_k) with the trapezoid rule in t.

    Args:
        trace: The run
        grid: Grid the trace was computed on
        until: Only use observations with t <= until

    Raises:
        ValueError: With fewer than two observations
        FieldError: If the trace lives on another grid
    """
    if not trace.grid.same_as(grid):
        raise FieldError("trace was recorded on a different grid")
    times = trace.times
    q1_int, q2_int = trace.st_integral_series()
    if until is not None:
        keep = times <= until
        times, q1_int, q2_int = times[keep], q1_int[keep], q2_int[keep]
    if len(times) < 2:
        raise ValueError("space-time norms need at least two observations")
    q1, q2 = spacetime_exponents(grid.dim)
    w1 = float(np.trapezoid(q1_int, times)) ** (1.0 / q1)
    w2 = float(np.trapezoid(q2_int, times)) ** (1.0 / q2)
    return SpacetimeNorms(w1=w1, w2=w2, st=max(w1, w2))


class Classification(Enum):
    """Verdict on one run."""
    BLOW_UP_CONFIRMED = auto()
    DISPERSIVE_CONFIRMED = auto()
    UNDECIDED = auto()


@dataclass(frozen=True)
class Evidence:
    """The named criteria behind a Classification."""

    gradient_exceeded: bool = False
    virial_concave: bool = False
    critical_norm_halved: bool = False
    st_norm_saturated: bool = False
    exterior_decayed: bool = False


@dataclass(frozen=True)
class OutcomeReport:
    classification: Classification
    evidence: Evidence


def concavity_margin(times: np.ndarray, values: np.ndarray) -> Optional[float]:
    """
    Leading coefficient of a least-squares quadratic fit over the final
    window, in units of its standard error. None if the window is too short.
    """
    n = len(times)
    window = max(FIT_MIN_POINTS, int(np.ceil(FIT_FRACTION * n)))
    if n < window:
        return None
    t = times[-window:] - np.mean(times[-window:])
    coeffs, cov = np.polyfit(t, values[-window:], deg=2, cov=True)
    stderr = np.sqrt(max(cov[0, 0], 0.0))
    if stderr == 0:
        return -np.inf if coeffs[0] < 0 else np.inf
    return float(coeffs[0] / stderr)


def _virial_concave(trace: "SimulationTrace") -> bool:
    if not trace.virial_radii:
        return False
    times = trace.times
    for index in range(len(trace.virial_radii)):
        series = np.array([s.v for s in trace.virial_series(index)])
        margin = concavity_margin(times, series)
        if margin is None or margin >= -2.0:
            return False
    return True


def _critical_norm_halved(trace: "SimulationTrace") -> bool:
    p = trace.grid.critical_exponent
    norms = np.array([rep.norm_critical for rep in trace.reports]) ** (1.0 / p)
    peak = float(np.max(norms)) if len(norms) else 0.0
    return bool(peak > 0 and peak >= 2.0 * norms[-1])


def _st_saturated(trace: "SimulationTrace") -> bool:
    times = trace.times
    if len(times) < 3:
        return False
    full = spacetime_norms(trace, trace.grid).st
    if full == 0:
        return False
    cutoff = times[0] + 0.9 * (times[-1] - times[0])
    early = spacetime_norms(trace, trace.grid, until=cutoff).st
    return bool((full - early) / full < SATURATION_TOL)


def _exterior_decayed(trace: "SimulationTrace") -> bool:
    interior = trace.interior_critical_series
    return bool(len(interior) > 0 and interior[0] > 0 and interior[0] >= 2.0 * interior[-1])


def classify_outcome(trace: "SimulationTrace", m: float) -> OutcomeReport:
    """
    Classify a completed run.

    Blow-up is confirmed by the gradient criterion together with a concave
    V_R(t) at every radius. Dispersion is confirmed, on a run that did not
    blow up, by critical-norm halving together with a saturated space-time
    norm. Anything else is undecided.
    """
    from src.solver import OutcomeKind

    evidence = Evidence(
        gradient_exceeded=trace.outcome is not None and trace.outcome.kind is OutcomeKind.BLOW_UP,
        virial_concave=_virial_concave(trace),
        critical_norm_halved=_critical_norm_halved(trace),
        st_norm_saturated=_st_saturated(trace),
        exterior_decayed=_exterior_decayed(trace),
    )
    if evidence.gradient_exceeded and len(trace.times) < FIT_MIN_POINTS:
        logger.warning(
            "blow-up run has %d observations, the concavity fit needs %d; lower observe_every",
            len(trace.times), FIT_MIN_POINTS,
        )
    if evidence.gradient_exceeded and evidence.virial_concave:
        verdict = Classification.BLOW_UP_CONFIRMED
    elif not evidence.gradient_exceeded and evidence.critical_norm_halved and evidence.st_norm_saturated:
        verdict = Classification.DISPERSIVE_CONFIRMED
    else:
        verdict = Classification.UNDECIDED
    logger.debug("classified run (m=%.6g) as %s: %s", m, verdict.name, evidence)
    return OutcomeReport(classification=verdict, evidence=evidence)


# ---------------------------------------------------------------------------
# Identities along a trace
# ---------------------------------------------------------------------------

FIRST_IDENTITY_TOL = (1e-3, 1e-8)
SECOND_IDENTITY_TOL = (1e-2, 1e-6)
TAIL_SHARE = 0.1


@dataclass(frozen=True)
class IdentityDefects:
    """
    Worst normalized gap between finite differences of V_R(t) and the
    first two virial identities; a value <= 1 is within tolerance.
    """

    first: float
    second: float


def virial_identity_defects(trace: "SimulationTrace", index: int, local: bool = False) -> IdentityDefects:
    """
    Compare V_R' and V_R'' by finite differences in t with dt_v and dt2_v.

    Centered differences are taken at the interior observations. The first
    identity is held to max(1e-3 sup_t |dt_v|, 1e-8), the second, at each
    observation, to max(1e-2 magnitude, 1e-6).

    Raises:
        ValueError: With fewer than three observations
    """
    samples = trace.virial_series(index, local)
    times = trace.times
    if len(times) < 3:
        raise ValueError("identity check needs at least three observations")
    v = np.array([s.v for s in samples])
    dt_v = np.array([s.dt_v for s in samples])
    dt2_v = np.array([s.dt2_v for s in samples])
    magnitude = np.array([s.magnitude for s in samples])

    h_prev = np.diff(times)[:-1]
    h_next = np.diff(times)[1:]
    slope_prev = (v[1:-1] - v[:-2]) / h_prev
    slope_next = (v[2:] - v[1:-1]) / h_next
    first_fd = (h_prev * slope_next + h_next * slope_prev) / (h_prev + h_next)
    second_fd = 2.0 * (slope_next - slope_prev) / (h_prev + h_next)

    rel, floor = FIRST_IDENTITY_TOL
    first_scale = max(rel * float(np.max(np.abs(dt_v))), floor)
    first = float(np.max(np.abs(first_fd - dt_v[1:-1]))) / first_scale
    rel, floor = SECOND_IDENTITY_TOL
    second_scale = np.maximum(rel * magnitude[1:-1], floor)
    second = float(np.max(np.abs(second_fd - dt2_v[1:-1]) / second_scale))
    return IdentityDefects(first=first, second=second)


def local_bound_violations(trace: "SimulationTrace") -> int:
    """Observations and radii where |dt_v| of the mass-localizing weight beats its bound."""
    count = 0
    for obs in trace.observations:
        for sample, bound in zip(obs.local_virials, obs.local_bounds):
            if abs(sample.dt_v) > bound:
                count += 1
    return count


def sobolev_excess(trace: "SimulationTrace") -> float:
    """Largest radial Sobolev ratio on the trace over radial_sobolev_constant."""
    ratios = [ratio for obs in trace.observations for ratio in obs.sobolev]
    if not ratios:
        return 0.0
    return float(max(ratios)) / radial_sobolev_constant(trace.grid.dim)


@dataclass(frozen=True)
class BlowUpMechanism:
    """
    Violation counts of the K- blow-up mechanism along a trace.

    k_gap: observations with K > -mu_bar (m - E).
    gradient_floor: observations with ||grad u||^2 <= d m.
    concavity: observations with dt2_v > 0 at a radius whose tail share
        of the second identity is already below 10% of |k_term|.
    concavity_checked: how many (observation, radius) pairs qualified.
    """

    k_gap: int
    gradient_floor: int
    concavity: int
    concavity_checked: int


def blowup_mechanism(trace: "SimulationTrace", m: float) -> BlowUpMechanism:
    """Count the observations where the K- mechanism fails on a trace."""
    k_gap = gradient_floor = concavity = checked = 0
    for obs in trace.observations:
        rep = obs.report
        gap = rep.mu_bar * (m - rep.energy)
        if rep.k > -gap:
            k_gap += 1
        if rep.grad_norm_sq <= rep.dim * m:
            gradient_floor += 1
        for sample in obs.virials:
            if abs(sample.tail_term) < TAIL_SHARE * abs(sample.k_term):
                checked += 1
                if sample.dt2_v > 0:
                    concavity += 1
    return BlowUpMechanism(k_gap, gradient_floor, concavity, checked)
