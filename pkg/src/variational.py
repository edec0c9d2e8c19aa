"""
Variational module: the scaling path j(lambda) = E(phi^lambda), the
derivative bounds on K below the threshold, and sampled checks of the
mountain-flank characterizations of m.
"""

import logging
from dataclasses import dataclass
from enum import Enum, auto
from typing import Callable, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq

from src.errors import EmptyConstraintError, NoRootError, SpecError
from src.functionals import (
    FieldSpec,
    FieldSpecFactory,
    FunctionalReport,
    Membership,
    classify_membership,
    evaluate,
    mu_bar,
    report,
    scale,
)
from src.grid import RadialGrid

logger = logging.getLogger(__name__)

LAMBDA_BRACKET = 20.0
LAMBDA_RESOLUTION = 1e-12
REFINE_WIDTH = 1e-3
REFINE_EXPANSIONS = 6
FD_STEP = 1e-4
BOUND_SLACK = 1e-6


@dataclass(frozen=True)
class ScalingPathPoint:
    """j, j' and two routes to j'' at one lambda."""

    lam: float
    j: float
    jp: float
    jpp_formula: float
    jpp_fd: float

    @property
    def jpp_defect(self) -> float:
        """|formula - finite difference|."""
        return abs(self.jpp_formula - self.jpp_fd)


def _require_closed_form(spec: FieldSpec) -> None:
    if not spec.closed_form:
        raise SpecError("the scaling path needs a closed-form descriptor")


def _scaled_report(spec: FieldSpec, grid: RadialGrid, lam: float) -> FunctionalReport:
    return report(evaluate(scale(spec, lam), grid))


def jpp_formula(base: FunctionalReport, lam: float, jp: float) -> float:
    """
    j''(lambda) = mu_bar j'(lambda) - 8 e^(4 lambda)/(d-1) ||grad phi||^2
                  - 8d e^(4d lambda/(d-2)) / ((d-1)(d-2)) ||phi||_{2*}^{2*}

    with the norms of the unscaled phi.
    """
    d = base.dim
    return (
        mu_bar(d) * jp
        - 8.0 * np.exp(4.0 * lam) / (d - 1) * base.grad_norm_sq
        - 8.0 * d * np.exp(4.0 * d * lam / (d - 2)) / ((d - 1) * (d - 2)) * base.norm_critical
    )


def scaling_path(
    spec: FieldSpec, grid: RadialGrid, lambdas: Sequence[float], fd_step: float = FD_STEP
) -> List[ScalingPathPoint]:
    """
    Walk the scaling path of a closed-form descriptor.

    Every point is computed on the grid from the exactly scaled descriptor;
    j'' is given both by the ODE along the path and by a centered
    difference of j' = K.

    Raises:
        SpecError: For sampled descriptors
    """
    _require_closed_form(spec)
    base = report(evaluate(spec, grid))
    points = []
    for lam in lambdas:
        rep = _scaled_report(spec, grid, lam)
        k_plus = _scaled_report(spec, grid, lam + fd_step).k
        k_minus = _scaled_report(spec, grid, lam - fd_step).k
        points.append(
            ScalingPathPoint(
                lam=float(lam),
                j=rep.energy,
                jp=rep.k,
                jpp_formula=jpp_formula(base, lam, rep.k),
                jpp_fd=(k_plus - k_minus) / (2.0 * fd_step),
            )
        )
    return points


def scaling_identity_defects(rep: FunctionalReport) -> Tuple[float, float]:
    """
    Relative defects of the two scaling identities on one report:

        (mu_bar - L) E   = 2/(d-1) int |grad phi|^2 + 2/(d-1) int |phi|^(2*)
        L (mu_bar - L) E = 8/(d-1) int |grad phi|^2 + 8d/((d-1)(d-2)) int |phi|^(2*)

    The second is evaluated with L applied through the exact scaling laws of
    the report's integrals.
    """
    d = rep.dim
    lhs = rep.mu_bar * rep.energy - rep.k
    rhs = 2.0 / (d - 1) * (rep.grad_norm_sq + rep.norm_critical)
    first = abs(lhs - rhs) / max(abs(rhs), 1e-300)

    # L f(phi) = d/dlambda f(phi^lambda) at 0; the integrals are exponentials in lambda
    l_grad = 4.0 * rep.grad_norm_sq
    l_crit = 4.0 * d / (d - 2) * rep.norm_critical
    lhs2 = 2.0 / (d - 1) * (l_grad + l_crit)
    rhs2 = 8.0 / (d - 1) * rep.grad_norm_sq + 8.0 * d / ((d - 1) * (d - 2)) * rep.norm_critical
    second = abs(lhs2 - rhs2) / max(abs(rhs2), 1e-300)
    return first, second


def find_lambda0(spec: FieldSpec, grid: RadialGrid) -> float:
    """
    Root of lambda -> K(phi^lambda) on the side the sign of K(phi) points to.

    For K(phi) < 0 the root lies in [-20, 0]; for K(phi) > 0 a forward root
    is searched in [0, 20]. The search first runs on the exact scaling laws
    of the lambda = 0 integrals, then the root is refined on the grid by
    evaluating the scaled descriptor itself, so that K(phi^lambda_0) as
    reported on this grid vanishes. If the grid values show no sign change
    near the first root, that root is returned with a warning.

    Raises:
        SpecError: For sampled descriptors or K(phi) = 0
        NoRootError: If the bracket shows no sign change
    """
    _require_closed_form(spec)
    estimate = find_lambda0_from_report(report(evaluate(spec, grid)))
    return _refine_on_grid(spec, grid, estimate)


def _refine_on_grid(spec: FieldSpec, grid: RadialGrid, estimate: float) -> float:
    def k_on_grid(lam: float) -> float:
        return _scaled_report(spec, grid, lam).k

    width = REFINE_WIDTH
    for _ in range(REFINE_EXPANSIONS):
        lo, hi = estimate - width, estimate + width
        f_lo, f_hi = k_on_grid(lo), k_on_grid(hi)
        if f_lo == 0.0:
            return float(lo)
        if f_hi == 0.0:
            return float(hi)
        if np.sign(f_lo) != np.sign(f_hi):
            lam0 = brentq(k_on_grid, lo, hi, xtol=LAMBDA_RESOLUTION, rtol=4.0 * np.finfo(float).eps, maxiter=500)
            logger.debug("lambda_0 refined on %s: %.15g -> %.15g", grid, estimate, lam0)
            return float(lam0)
        width *= 4.0
    logger.warning("K on %s keeps its sign near lambda_0 = %.6g; keeping the scaling-law root", grid, estimate)
    return float(estimate)


def find_lambda0_from_report(base: FunctionalReport) -> float:
    """find_lambda0 on an already computed report."""
    if base.k == 0.0:
        raise SpecError("K(phi) = 0: lambda_0 is 0 by definition")
    lo, hi = (-LAMBDA_BRACKET, 0.0) if base.k < 0 else (0.0, LAMBDA_BRACKET)

    def k_along(lam: float) -> float:
        return base.rescaled(lam).k

    f_lo, f_hi = k_along(lo), k_along(hi)
    if np.sign(f_lo) == np.sign(f_hi) or f_lo == 0.0 or f_hi == 0.0:
        raise NoRootError(f"K(phi^lambda) keeps its sign on [{lo:g}, {hi:g}]")
    lam0 = brentq(k_along, lo, hi, xtol=LAMBDA_RESOLUTION, rtol=4.0 * np.finfo(float).eps, maxiter=500)
    logger.debug("lambda_0 = %.15g (K(phi) = %.6g)", lam0, base.k)
    return float(lam0)


class BoundBranch(Enum):
    """Which of the two below-threshold bounds on K applies."""
    NEGATIVE = auto()
    NON_NEGATIVE = auto()


@dataclass(frozen=True)
class BoundReport:
    """Outcome of checking the below-threshold bound on K for one field."""

    k: float
    e: float
    m: float
    branch: BoundBranch
    bound_value: float
    satisfied: bool


def check_below_threshold_bounds(rep: FunctionalReport, m: float, slack: float = BOUND_SLACK) -> BoundReport:
    """
    Check the bounds on K for a field with E < m:

        K < 0:  K <= -mu_bar (m - E)
        K >= 0: K >= min(mu_bar (m - E), 2/(2d-3) ||grad phi||^2
                                         + 2d/((d+1)(2d-3)) ||phi||_p2^p2)

    Raises:
        ValueError: If E >= m
    """
    if rep.energy >= m:
        raise ValueError(f"bound only applies below threshold: E={rep.energy:.6g} >= m={m:.6g}")
    d = rep.dim
    gap = rep.mu_bar * (m - rep.energy)
    if rep.k < 0:
        bound = -gap
        tol = slack * max(abs(rep.k), abs(bound))
        branch = BoundBranch.NEGATIVE
        satisfied = rep.k <= bound + tol
    else:
        alt = 2.0 / (2 * d - 3) * rep.grad_norm_sq + 2.0 * d / ((d + 1) * (2 * d - 3)) * rep.norm_subcritical
        bound = min(gap, alt)
        tol = slack * max(abs(rep.k), abs(bound))
        branch = BoundBranch.NON_NEGATIVE
        satisfied = rep.k >= bound - tol
    return BoundReport(k=rep.k, e=rep.energy, m=m, branch=branch, bound_value=bound, satisfied=bool(satisfied))


@dataclass(frozen=True)
class EnergySandwich:
    """
    H(phi) <= E(phi) <= 1/2 ||grad phi||^2 + (d-1)/(2d+2) ||phi||_p2^p2 for K >= 0.

    Both gaps are >= 0 when the bound holds; E - H equals (d-1)/(4d) K.
    """

    lower_gap: float
    upper_gap: float
    holds: bool


def energy_sandwich(rep: FunctionalReport, slack: float = 1e-12) -> EnergySandwich:
    """
    Check the two-sided energy bound of a field with K >= 0.

    Raises:
        ValueError: If K < 0
    """
    if rep.k < 0:
        raise ValueError(f"energy sandwich needs K >= 0, got K={rep.k:.6g}")
    d = rep.dim
    ceiling = 0.5 * rep.grad_norm_sq + (d - 1) / (2.0 * d + 2.0) * rep.norm_subcritical
    lower_gap = rep.energy - rep.h
    upper_gap = ceiling - rep.energy
    tol = slack * max(abs(rep.energy), ceiling, 1e-300)
    return EnergySandwich(lower_gap, upper_gap, bool(lower_gap >= -tol and upper_gap >= -tol))


SMALL_FIELD_LADDER = np.geomspace(1e-3, 200.0, 121)


def small_field_sign_violations(grid: RadialGrid, width: float = 1.0) -> int:
    """
    Check that K(a Q) > 0 for every amplitude below the first one with
    K <= 0, for Gaussians Q of the given width, and that K stays <= 0 after.

    Returns:
        The number of ladder rows breaking that pattern; a ladder that never
        reaches K <= 0 counts as one violation
    """
    ks = [report(evaluate(FieldSpecFactory.create_gaussian(grid.dim, a, width), grid)).k for a in SMALL_FIELD_LADDER]
    nonpositive = [index for index, k in enumerate(ks) if k <= 0]
    if not nonpositive:
        return 1
    first = nonpositive[0]
    violations = sum(1 for k in ks[first:] if k > 0)
    if first == 0:
        violations += 1
    return violations


class Constraint(Enum):
    """Constraint set of a sampled infimum."""
    K_LE_0 = auto()
    KC_LE_0 = auto()


def sampled_infimum(family: Iterable[FieldSpec], grid: RadialGrid, constraint: Constraint) -> float:
    """
    Smallest H over the members of `family` that satisfy the constraint.

    The zero field is skipped.

    Raises:
        ValueError: For an empty family
        EmptyConstraintError: If no nonzero member satisfies the constraint
    """
    family = list(family)
    if not family:
        raise ValueError("sampled_infimum needs a nonempty family")
    best: Optional[float] = None
    for spec in family:
        rep = report(evaluate(spec, grid))
        if rep.grad_norm_sq == 0.0 and rep.norm_critical == 0.0:
            continue
        value = rep.k if constraint is Constraint.K_LE_0 else rep.k_critical
        if value <= 0.0 and (best is None or rep.h < best):
            best = rep.h
    if best is None:
        raise EmptyConstraintError(f"no member satisfies {constraint.name}")
    return float(best)


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    """One datum of an amplitude (or other parameter) sweep."""

    value: float
    spec: FieldSpec
    report: FunctionalReport
    membership: Membership


def parameter_sweep(
    make_spec: Callable[[float], FieldSpec], grid: RadialGrid, values: Sequence[float], m: float
) -> List[SweepRow]:
    """Report and classify make_spec(v) for each v."""
    rows = []
    for value in values:
        spec = make_spec(value)
        rep = report(evaluate(spec, grid))
        rows.append(SweepRow(float(value), spec, rep, classify_membership(rep, m)))
    return rows


def find_witness(rows: Sequence[SweepRow], membership: Membership) -> Optional[SweepRow]:
    """First sweep row in the given set, or None."""
    for row in rows:
        if row.membership is membership:
            return row
    return None


GAUSSIAN_LADDER = np.geomspace(0.5, 200.0, 121)
GROUND_STATE_LADDER = np.linspace(0.05, 3.0, 119)


def kminus_witness(
    make_spec: Callable[[float], FieldSpec], grid: RadialGrid, m: float, values: Sequence[float]
) -> SweepRow:
    """
    First value on the ladder whose datum lies in K-.

    Raises:
        EmptyConstraintError: If the ladder never reaches K-
    """
    row = find_witness(parameter_sweep(make_spec, grid, values, m), Membership.K_MINUS)
    if row is None:
        raise EmptyConstraintError("no K- datum on the ladder")
    return row


def kplus_witness(
    make_spec: Callable[[float], FieldSpec], grid: RadialGrid, m: float, values: Sequence[float]
) -> SweepRow:
    """
    Last K+ datum on the ladder before the first K- one.

    Raises:
        EmptyConstraintError: If no K+ datum precedes the first K- one
    """
    last = None
    for row in parameter_sweep(make_spec, grid, values, m):
        if row.membership is Membership.K_MINUS:
            break
        if row.membership is Membership.K_PLUS:
            last = row
    if last is None:
        raise EmptyConstraintError("no K+ datum on the ladder")
    return last


def gaussian_kminus_witness(grid: RadialGrid, m: float, width: float = 1.0) -> SweepRow:
    """Smallest amplitude on a geometric ladder whose Gaussian lies in K-."""
    row = kminus_witness(
        lambda a: FieldSpecFactory.create_gaussian(grid.dim, a, width), grid, m, GAUSSIAN_LADDER
    )
    logger.info("K- Gaussian witness: amplitude %.6g, width %g", row.value, width)
    return row


def ground_state_kminus_witness(grid: RadialGrid, m: float, lam: float) -> SweepRow:
    """Smallest amplitude c on a ladder with c W^lambda in K-."""
    row = kminus_witness(
        lambda c: FieldSpecFactory.create_ground_state(grid.dim, c, lam), grid, m, GROUND_STATE_LADDER
    )
    logger.info("K- ground-state witness: c=%.6g, lambda=%g", row.value, lam)
    return row


def random_below_threshold(
    grid: RadialGrid, m: float, count: int, rng: np.random.Generator, max_draws: Optional[int] = None
) -> List[Tuple[FieldSpec, FunctionalReport]]:
    """
    Draw random Gaussians and concentrated ground states, keeping E < m.

    Gaussians: amplitude log-uniform on [0.01, 40], width on [0.7, 3].
    Ground states: c on [0.2, 2], lambda on [0, 0.5].
    """
    max_draws = max_draws or 50 * count
    kept = []
    draws = 0
    while len(kept) < count and draws < max_draws:
        draws += 1
        if rng.random() < 0.5:
            spec = FieldSpecFactory.create_gaussian(
                grid.dim, float(np.exp(rng.uniform(np.log(0.01), np.log(40.0)))), float(rng.uniform(0.7, 3.0))
            )
        else:
            spec = FieldSpecFactory.create_ground_state(
                grid.dim, float(rng.uniform(0.2, 2.0)), float(rng.uniform(0.0, 0.5))
            )
        rep = report(evaluate(spec, grid))
        if rep.energy < m:
            kept.append((spec, rep))
    if len(kept) < count:
        logger.warning("only %d of %d below-threshold samples after %d draws", len(kept), count, draws)
    return kept
