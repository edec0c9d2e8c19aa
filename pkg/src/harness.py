"""
Harness module that turns experiment configs into artifacts.

Each cmd_* function takes a validated ExperimentConfig and an output
directory, writes its CSV/JSON files there and returns the process exit code.
Failures that have their own exit code are raised as the matching LabError.
"""

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import gamma

from src.config import ExperimentConfig, InitialDatum
from src.diagnostics import (
    Classification,
    OutcomeReport,
    blowup_mechanism,
    classify_outcome,
    glassey_bound,
    local_bound_violations,
    sobolev_excess,
    truncated_position,
    virial,
    virial_identity_defects,
)
from src.errors import ConfigError, GateViolation, GridError, SolverError
from src.functionals import (
    FieldSpecFactory,
    FunctionalReport,
    Membership,
    classify_membership,
    evaluate,
    ground_state_residual,
    report,
    scale,
    threshold,
    threshold_holds,
    threshold_invariant_errors,
    THRESHOLD_TOLERANCES,
)
from src.grid import RadialField, RadialGrid, integrate, laplacian, make_grid, radial_derivative, sphere_area
from src.solver import SimulationTrace, SolverConfig, evolve, splitting_defect
from src.variational import (
    Constraint,
    check_below_threshold_bounds,
    energy_sandwich,
    scaling_identity_defects,
    random_below_threshold,
    sampled_infimum,
    scaling_path,
    small_field_sign_violations,
)

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
M_FLOOR_TOL = 1e-3


def build_grid(config: ExperimentConfig) -> RadialGrid:
    """The grid named by a config; rejections raise GridError."""
    return make_grid(config.dim, config.grid.n, config.grid.r_max)


def write_json(path: Path, payload: dict) -> None:
    """UTF-8 JSON with sorted keys and a trailing newline."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(payload, sort_keys=True, indent=2))
        fh.write("\n")


def _fmt(value: float) -> str:
    return FLOAT_FORMAT % value


def report_to_dict(rep: FunctionalReport) -> dict:
    """The scalar fields of a report."""
    return {
        "mass": rep.mass,
        "energy": rep.energy,
        "critical_energy": rep.critical_energy,
        "k": rep.k,
        "k_quadratic": rep.k_quadratic,
        "k_nonlinear": rep.k_nonlinear,
        "k_critical": rep.k_critical,
        "h": rep.h,
        "grad_sq": rep.grad_norm_sq,
        "norm_critical": rep.norm_critical,
        "norm_subcritical": rep.norm_subcritical,
    }


def datum_to_dict(datum: InitialDatum) -> dict:
    return datum.model_dump(mode="json", by_alias=True, exclude_none=True)


# ---------------------------------------------------------------------------
# Traces
# ---------------------------------------------------------------------------


def trace_columns(radii: Sequence[float]) -> List[str]:
    """CSV header of a trace."""
    columns = ["t", "mass", "energy", "k", "grad_sq", "norm_critical", "norm_subcritical", "h"]
    for R in radii:
        columns += [f"vR_{R:g}", f"dtvR_{R:g}", f"dt2vR_{R:g}"]
    columns += [f"ext_{R:g}" for R in radii]
    for R in radii:
        columns += [f"lvR_{R:g}", f"ldtvR_{R:g}", f"ldt2vR_{R:g}"]
    columns += [f"sob_{R:g}" for R in radii]
    columns.append("glassey_defect")
    return columns


def trace_rows(trace: SimulationTrace) -> np.ndarray:
    """One row per observation, in trace_columns order."""
    rows = []
    for obs in trace.observations:
        rep = obs.report
        row = [obs.t, rep.mass, rep.energy, rep.k, rep.grad_norm_sq, rep.norm_critical, rep.norm_subcritical, rep.h]
        for sample in obs.virials:
            row += [sample.v, sample.dt_v, sample.dt2_v]
        row += list(obs.exterior)
        for sample in obs.local_virials:
            row += [sample.v, sample.dt_v, sample.dt2_v]
        row += list(obs.sobolev)
        row.append(obs.glassey.identity_defect)
        rows.append(row)
    return np.array(rows, dtype=float).reshape(len(rows), 9 + 8 * len(trace.virial_radii))


def write_trace_csv(path: Path, trace: SimulationTrace) -> None:
    """Header row, comma separated, 17 significant digits, LF line endings."""
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(
        path,
        trace_rows(trace),
        fmt=FLOAT_FORMAT,
        delimiter=",",
        header=",".join(trace_columns(trace.virial_radii)),
        comments="",
        newline="\n",
        encoding="utf-8",
    )


def read_trace_csv(path: Path) -> Tuple[List[str], np.ndarray]:
    """Columns and values of a CSV written by write_trace_csv."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
    values = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, values


# ---------------------------------------------------------------------------
# Runs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DatumResult:
    """What one initial datum turned into."""

    index: int
    datum: InitialDatum
    initial: FunctionalReport
    membership: Membership
    trace: Optional[SimulationTrace] = None
    outcome: Optional[OutcomeReport] = None

    def to_dict(self) -> dict:
        entry = {
            "index": self.index,
            "datum": datum_to_dict(self.datum),
            "initial": report_to_dict(self.initial),
            "membership": self.membership.name,
        }
        if self.trace is not None and self.trace.outcome is not None:
            entry["outcome"] = self.trace.outcome.kind.name
            entry["t_stop"] = self.trace.outcome.t_stop
            entry["mass_drift"] = self.trace.mass_drift()
        if self.outcome is not None:
            entry["classification"] = self.outcome.classification.name
            entry["evidence"] = {name: bool(flag) for name, flag in vars(self.outcome.evidence).items()}
        return entry


def gate_violations(results: Sequence[DatumResult]) -> List[str]:
    """
    Contradictions with the dichotomy: a K- run classified as dispersive,
    or a K+ run classified as blowing up. Undecided runs never count.
    """
    violations = []
    for res in results:
        if res.outcome is None:
            continue
        verdict = res.outcome.classification
        if res.membership is Membership.K_MINUS and verdict is Classification.DISPERSIVE_CONFIRMED:
            violations.append(f"datum {res.index}: K- run classified dispersive")
        if res.membership is Membership.K_PLUS and verdict is Classification.BLOW_UP_CONFIRMED:
            violations.append(f"datum {res.index}: K+ run classified as blow-up")
    return violations


def _run_datum(
    index: int, datum: InitialDatum, grid: RadialGrid, cfg: SolverConfig,
    radii: Sequence[float], m: float, out: Path, simulate_above: bool = True,
) -> DatumResult:
    spec = datum.to_spec(grid.dim)
    initial = report(evaluate(spec, grid))
    membership = classify_membership(initial, m)
    if membership is Membership.ABOVE_THRESHOLD and not simulate_above:
        return DatumResult(index, datum, initial, membership)
    try:
        trace = evolve(spec, grid, cfg, radii, m=m)
    except SolverError as exc:
        if exc.trace is not None:
            write_trace_csv(out / f"trace_{index}.csv", exc.trace)
        raise
    write_trace_csv(out / f"trace_{index}.csv", trace)
    return DatumResult(index, datum, initial, membership, trace, classify_outcome(trace, m))


def _check_radii(grid: RadialGrid, radii: Sequence[float]) -> None:
    bad = [R for R in radii if R > grid.r_max / 3.0]
    if bad:
        raise ConfigError(f"virial radii {bad} exceed r_max/3 = {grid.r_max / 3.0:g}")


def _run_all(
    data: Sequence[InitialDatum], config: ExperimentConfig, grid: RadialGrid, m: float,
    out: Path, jobs: int, simulate_above: bool,
) -> List[DatumResult]:
    cfg = config.require_solver()
    radii = tuple(config.virial_radii)
    _check_radii(grid, radii)

    def work(item):
        index, datum = item
        return _run_datum(index, datum, grid, cfg, radii, m, out, simulate_above)

    # map keeps submission order, so output order never depends on scheduling
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as executor:
        return list(executor.map(work, enumerate(data)))


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_threshold(config: ExperimentConfig, out: Path, jobs: int = 1) -> int:
    """Write threshold.json; 5 if a cross-identity is out of tolerance."""
    grid = build_grid(config)
    result = threshold(grid)
    errors = threshold_invariant_errors(result)
    holds = threshold_holds(result)
    write_json(out / "threshold.json", {
        "dim": result.dim,
        "m": result.m,
        "m_closed_form": result.m_closed_form,
        "grad_w_norm_sq": result.grad_w_norm_sq,
        "critical_w_norm": result.critical_w_norm,
        "sobolev_constant": result.sobolev_constant,
        "pde_residual": result.pde_residual,
        "kc_of_w": result.kc_of_w,
        "invariant_errors": errors,
        "holds": holds,
    })
    logger.info("m = %.12g (closed form %.12g) on %s", result.m, result.m_closed_form, grid)
    for name, err in errors.items():
        if err > THRESHOLD_TOLERANCES[name]:
            logger.error("threshold identity %s off by %.3e", name, err)
    return 0 if holds else 5


def cmd_classify(config: ExperimentConfig, out: Path, jobs: int = 1) -> int:
    """Membership table for every initial datum, without simulating."""
    if not config.initial_data:
        raise ConfigError("classify needs initial_data")
    grid = build_grid(config)
    m = threshold(grid).m
    rows = []
    print(f"{'#':>3} {'mass':>14} {'energy':>14} {'K':>14} {'H':>14}  membership")
    for index, datum in enumerate(config.initial_data):
        rep = report(evaluate(datum.to_spec(grid.dim), grid))
        membership = classify_membership(rep, m)
        print(f"{index:>3} {rep.mass:>14.6g} {rep.energy:>14.6g} {rep.k:>14.6g} {rep.h:>14.6g}  {membership.name}")
        rows.append({
            "index": index,
            "datum": datum_to_dict(datum),
            "mass": rep.mass,
            "energy": rep.energy,
            "k": rep.k,
            "h": rep.h,
            "membership": membership.name,
        })
    write_json(out / "classify.json", {"m": m, "data": rows})
    return 0


def _summary(config: ExperimentConfig, m: float, results: Sequence[DatumResult], violations: List[str]) -> dict:
    return {
        "config": config.model_dump(mode="json", by_alias=True, exclude_none=True),
        "m": m,
        "data": [res.to_dict() for res in results],
        "gate_violations": violations,
    }


def cmd_simulate(config: ExperimentConfig, out: Path, jobs: int = 1) -> int:
    """One trace_<i>.csv per datum plus summary.json."""
    if not config.initial_data:
        raise ConfigError("simulate needs initial_data")
    grid = build_grid(config)
    m = threshold(grid).m
    results = _run_all(config.initial_data, config, grid, m, out, jobs, simulate_above=True)
    violations = gate_violations(results)
    write_json(out / "summary.json", _summary(config, m, results, violations))
    for res in results:
        logger.info(
            "datum %d (%s): %s, %s", res.index, res.membership.name,
            res.trace.outcome.kind.name, res.outcome.classification.name,
        )
    if violations:
        raise GateViolation("; ".join(violations))
    return 0


def cmd_dichotomy(config: ExperimentConfig, out: Path, jobs: int = 1) -> int:
    """
    Sweep one parameter of the first datum and simulate every row below
    the threshold; raise GateViolation on any contradiction.
    """
    if config.sweep is None:
        raise ConfigError("dichotomy needs a sweep section")
    if not config.initial_data:
        raise ConfigError("dichotomy needs a template datum in initial_data")
    template = config.initial_data[0]
    data = [template.with_value(config.sweep.parameter, v) for v in config.sweep.values]

    grid = build_grid(config)
    m = threshold(grid).m
    results = _run_all(data, config, grid, m, out, jobs, simulate_above=False)

    path = out / "dichotomy.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([config.sweep.parameter, "energy", "k", "membership", "outcome", "classification"])
        for value, res in zip(config.sweep.values, results):
            writer.writerow([
                _fmt(value),
                _fmt(res.initial.energy),
                _fmt(res.initial.k),
                res.membership.name,
                res.trace.outcome.kind.name if res.trace is not None else "SKIPPED",
                res.outcome.classification.name if res.outcome is not None else "SKIPPED",
            ])

    violations = gate_violations(results)
    write_json(out / "summary.json", _summary(config, m, results, violations))
    if violations:
        raise GateViolation("; ".join(violations))
    logger.info("dichotomy sweep of %d rows: no gate violations", len(results))
    return 0


# ---------------------------------------------------------------------------
# Property suite
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CheckResult:
    """One named property check."""

    name: str
    value: float
    tolerance: float
    passed: bool

    def to_dict(self) -> dict:
        return {"value": self.value, "tolerance": self.tolerance, "passed": self.passed}


class PropertySuite:
    """
    Runs the invariant checks of every module on one configured grid.

    Randomized checks draw from numpy's default_rng(seed), so a fixed seed
    reproduces the suite exactly.
    """

    def __init__(self, config: ExperimentConfig):
        """
        Initialize a new PropertySuite.

        Args:
            config: Experiment config; dim, grid, seed and verify are used
        """
        self.config = config
        self.grid = build_grid(config)
        self.results: List[CheckResult] = []
        self.m: Optional[float] = None

    def _record(self, name: str, value: float, tolerance: float, passed: Optional[bool] = None) -> None:
        value = float(value)
        ok = bool(value <= tolerance) if passed is None else bool(passed)
        self.results.append(CheckResult(name, value, tolerance, ok))
        if not ok:
            logger.error("property %s failed: %.6g (tolerance %.3g)", name, value, tolerance)

    def check_ground_state(self) -> None:
        self._record("ground_state.pde_residual", ground_state_residual(self.grid), 1e-4)

    def check_threshold(self) -> None:
        try:
            result = threshold(self.grid)
        except GridError as exc:
            logger.error("threshold unavailable: %s", exc)
            self._record("threshold.grid", 1.0, 0.0, passed=False)
            return
        self.m = result.m
        for name, err in threshold_invariant_errors(result).items():
            self._record(f"threshold.{name}", err, THRESHOLD_TOLERANCES[name])

    def check_quadrature(self) -> None:
        d = self.grid.dim
        # (1 + r) e^{-r^2} keeps an odd power in the integrand, so the trapezoid
        # rule is not superconvergent on it
        exact = 0.5 * sphere_area(d) * (gamma(d / 2.0) + gamma((d + 1) / 2.0))
        errors = []
        for n in (41, 81):
            coarse = make_grid(d, n, 10.0)
            r = coarse.nodes
            errors.append(abs(integrate(coarse, (1.0 + r) * np.exp(-(r**2))) - exact) / exact)
        ratio = errors[0] / max(errors[1], 1e-300)
        self._record("grid.quadrature_order", ratio, 3.5, passed=ratio >= 3.5)

        r = self.grid.nodes
        base = integrate(self.grid, np.exp(-(r**2)))
        worst = 0.0
        for lam in (-0.3, 0.3):
            scaled = integrate(self.grid, np.exp(-((np.exp(2.0 * lam) * r) ** 2)) * np.exp(2.0 * d * lam))
            worst = max(worst, abs(scaled - base) / base)
        self._record("grid.quadrature_scaling", worst, 1e-6)

        u = RadialField(self.grid, np.exp(-(r**2)))
        v = RadialField(self.grid, np.exp(-2.0 * r**2))
        lhs = integrate(self.grid, laplacian(u).values.real * v.values.real)
        rhs = -integrate(self.grid, radial_derivative(u).values.real * radial_derivative(v).values.real)
        defect = abs(lhs - rhs) / abs(rhs)
        self._record("grid.integration_by_parts", defect / self.grid.dr**2, 10.0)

    def check_scaling_laws(self) -> None:
        fine = make_grid(self.grid.dim, 2**18 + 1, 16.0)
        spec = FieldSpecFactory.create_gaussian(fine.dim, 1.0, 2.0)
        base = report(evaluate(spec, fine))
        worst = 0.0
        for lam in (-0.25, 0.25):
            direct = report(evaluate(scale(spec, lam), fine))
            exact = base.rescaled(lam)
            for a, b in ((direct.mass, exact.mass), (direct.grad_norm_sq, exact.grad_norm_sq),
                         (direct.norm_critical, exact.norm_critical),
                         (direct.norm_subcritical, exact.norm_subcritical)):
                worst = max(worst, abs(a - b) / abs(b))
        self._record("functionals.scaling_laws", worst, 1e-8)

    def check_small_fields(self) -> None:
        self._record("functionals.small_field_positivity", small_field_sign_violations(self.grid), 0)

    def check_paths(self) -> None:
        spec = FieldSpecFactory.create_gaussian(self.grid.dim, 1.0, 1.5)
        base_mass = report(evaluate(spec, self.grid)).mass
        path_defect = mass_defect = 0.0
        for point in scaling_path(spec, self.grid, (-0.5, 0.0, 0.5)):
            direct = report(evaluate(scale(spec, point.lam), self.grid))
            path_defect = max(path_defect, abs(point.jp - direct.k) / max(abs(direct.k), 1e-300))
            mass_defect = max(mass_defect, abs(direct.mass - base_mass) / base_mass)
        self._record("variational.path_consistency", path_defect, 1e-10)
        self._record("variational.path_mass", mass_defect, 1e-10)

    def check_scaling_ode(self) -> None:
        fine = make_grid(self.grid.dim, 2**18 + 1, 16.0)
        spec = FieldSpecFactory.create_gaussian(fine.dim, 0.5, 1.0)
        worst = 0.0
        for point in scaling_path(spec, fine, (-0.5, 0.0, 0.5)):
            worst = max(worst, point.jpp_defect / max(1e-6 * abs(point.jpp_formula), 1e-8))
        self._record("variational.scaling_ode", worst, 1.0)

    def check_random_fields(self, rng: np.random.Generator) -> None:
        if self.m is None:
            self._record("variational.random_fields", 1.0, 0.0, passed=False)
            return
        samples = random_below_threshold(self.grid, self.m, self.config.verify.samples, rng)
        self._record(
            "variational.sample_count", len(samples), self.config.verify.samples,
            passed=len(samples) >= self.config.verify.samples,
        )
        violations = 0
        scaling_defect = 0.0
        glassey_defect = 0.0
        chain_failures = 0
        sandwich_failures = 0
        for _, rep in samples:
            if rep.k >= 0 and not energy_sandwich(rep).holds:
                sandwich_failures += 1
            if not check_below_threshold_bounds(rep, self.m).satisfied:
                violations += 1
            scaling_defect = max(scaling_defect, *scaling_identity_defects(rep))
            check = glassey_bound(rep, self.m, tol=M_FLOOR_TOL)
            glassey_defect = max(glassey_defect, check.identity_defect)
            if check.h_below_critical is False or check.h_above_threshold is False:
                chain_failures += 1
        self._record("variational.k_bounds_below_threshold", violations, 0)
        self._record("variational.scaling_identities", scaling_defect, 1e-10)
        self._record("diagnostics.k_energy_identity", glassey_defect, 1e-10)
        self._record("diagnostics.h_chain_for_negative_k", chain_failures, 0)
        self._record("variational.energy_sandwich_for_positive_k", sandwich_failures, 0)

        negative = [spec for spec, rep in samples if rep.k <= 0]
        if negative:
            floor = sampled_infimum(negative, self.grid, Constraint.K_LE_0)
            self._record("variational.k_le_0_floor", (self.m - floor) / self.m, M_FLOOR_TOL)

    def check_critical_family(self) -> None:
        if self.m is None:
            return
        family = [FieldSpecFactory.create_ground_state(self.grid.dim, c, 0.0) for c in np.linspace(1.001, 3.0, 81)]
        floor = sampled_infimum(family, self.grid, Constraint.KC_LE_0)
        self._record("variational.kc_le_0_floor", (self.m - floor) / self.m, M_FLOOR_TOL)
        self._record("variational.kc_le_0_sharpness", abs(floor - self.m) / self.m, 1e-2)

    def check_virials(self) -> None:
        f = evaluate(FieldSpecFactory.create_gaussian(self.grid.dim, 1.0, 1.0), self.grid)
        R = min(10.0, self.grid.r_max / 3.0)
        sample = virial(f, R)
        four_k = 4.0 * report(f).k
        self._record("diagnostics.untruncated_virial", abs(sample.dt2_v - four_k) / abs(four_k), 1e-6)
        self._record("diagnostics.real_field_first_identity", abs(sample.dt_v), 0.0)
        position = truncated_position(f, R)
        self._record("diagnostics.radial_position", max(abs(x) for x in position.vector), 0.0)

    def check_short_run(self) -> None:
        spec = FieldSpecFactory.create_gaussian(self.grid.dim, 0.5, 2.0)
        cfg = SolverConfig(dt=1e-3, t_final=0.2, observe_every=20)
        trace = evolve(spec, self.grid, cfg)
        self._record("solver.mass_drift", trace.mass_drift(), 1e-8)
        momentum = max(max(abs(p) for p in rep.momentum) for rep in trace.reports)
        self._record("solver.radial_momentum", momentum, 0.0)

    def check_energy_conservation(self) -> None:
        spec = FieldSpecFactory.create_gaussian(self.grid.dim, 0.5, 2.0)
        m = self.m if self.m is not None else 0.0
        drifts = []
        for dt, every in ((1e-3, 20), (5e-4, 40)):
            trace = evolve(spec, self.grid, SolverConfig(dt=dt, t_final=0.4, observe_every=every))
            drifts.append(trace.energy_drift(m))
        self._record("solver.energy_drift", drifts[0], 1e-5)
        ratio = drifts[0] / max(drifts[1], 1e-300)
        self._record("solver.energy_drift_order", ratio, 3.5, passed=ratio >= 3.5)

        f = evaluate(FieldSpecFactory.create_gaussian(self.grid.dim, 1.0, 2.0), self.grid)
        ratio = splitting_defect(f, 0.02) / max(splitting_defect(f, 0.01), 1e-300)
        self._record("solver.splitting_order", ratio, 6.0, passed=ratio >= 6.0)

    def check_trace_identities(self) -> None:
        spec = FieldSpecFactory.create_gaussian(self.grid.dim, 0.5, 2.0)
        cfg = SolverConfig(dt=1e-3, t_final=0.1, observe_every=2)
        trace = evolve(spec, self.grid, cfg, virial_radii=(2.0,), m=self.m)
        for local, label in ((False, "quadratic_core"), (True, "mass_localizing")):
            defects = virial_identity_defects(trace, 0, local)
            self._record(f"diagnostics.first_virial_identity.{label}", defects.first, 1.0)
            self._record(f"diagnostics.second_virial_identity.{label}", defects.second, 1.0)
        self._record("diagnostics.local_virial_bound", local_bound_violations(trace), 0)
        self._record("diagnostics.radial_sobolev_ratio", sobolev_excess(trace), 1.01)
        worst = max(obs.glassey.identity_defect for obs in trace.observations)
        self._record("diagnostics.trace_k_energy_identity", worst, 1e-10)

    def check_blowup_mechanism(self) -> None:
        if self.m is None:
            self._record("diagnostics.blowup_mechanism", 1.0, 0.0, passed=False)
            return
        spec = FieldSpecFactory.create_ground_state(self.grid.dim, 0.7, 0.75)
        if classify_membership(report(evaluate(spec, self.grid)), self.m) is not Membership.K_MINUS:
            self._record("diagnostics.blowup_datum_in_k_minus", 1.0, 0.0, passed=False)
            return
        cfg = SolverConfig(dt=1e-5, t_final=5.0, blowup_factor=25.0, dt_min=1e-10, observe_every=20)
        trace = evolve(spec, self.grid, cfg, virial_radii=(2.0,), m=self.m)
        mechanism = blowup_mechanism(trace, self.m)
        self._record("diagnostics.k_below_energy_gap", mechanism.k_gap, 0)
        self._record("diagnostics.gradient_above_dm", mechanism.gradient_floor, 0)
        self._record("diagnostics.virial_concave_once_localized", mechanism.concavity, 0)
        self._record(
            "diagnostics.virial_concavity_checked", mechanism.concavity_checked, 1,
            passed=mechanism.concavity_checked >= 1,
        )
        chain = sum(
            1 for obs in trace.observations
            if obs.glassey.h_below_critical is False or obs.glassey.h_above_threshold is False
        )
        self._record("diagnostics.trace_h_chain", chain, 0)

    def run(self) -> List[CheckResult]:
        rng = np.random.default_rng(self.config.seed)
        self.check_ground_state()
        self.check_threshold()
        self.check_quadrature()
        self.check_scaling_laws()
        self.check_small_fields()
        self.check_paths()
        self.check_scaling_ode()
        self.check_random_fields(rng)
        self.check_critical_family()
        self.check_virials()
        self.check_short_run()
        self.check_energy_conservation()
        self.check_trace_identities()
        self.check_blowup_mechanism()
        return self.results


def cmd_verify(config: ExperimentConfig, out: Path, jobs: int = 1) -> int:
    """Run the property suite, write verify.json; 5 if any check failed."""
    results = PropertySuite(config).run()
    passed = all(r.passed for r in results)
    write_json(out / "verify.json", {
        "dim": config.dim,
        "seed": config.seed,
        "checks": {r.name: r.to_dict() for r in results},
        "passed": passed,
    })
    failed = [r.name for r in results if not r.passed]
    if failed:
        logger.error("failed properties: %s", ", ".join(failed))
        return 5
    logger.info("all %d properties hold", len(results))
    return 0


COMMANDS: Dict[str, Callable[[ExperimentConfig, Path, int], int]] = {
    "threshold": cmd_threshold,
    "classify": cmd_classify,
    "simulate": cmd_simulate,
    "dichotomy": cmd_dichotomy,
    "verify": cmd_verify,
}
