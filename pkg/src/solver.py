"""
Solver module that integrates the radial combined-nonlinearity NLS in time.

Each step is a Strang splitting: half a step of the exact nonlinear phase
rotation, a full Crank-Nicolson step of the linear flow, and another half
nonlinear step. The linear step uses the conservative Laplacian of
grid.flux_laplacian_bands, so the discrete mass is conserved to rounding.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum, auto
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.cutoffs import CutoffKind
from src.diagnostics import (
    GlasseyCheck,
    VirialSample,
    exterior_energy,
    glassey_bound,
    interior_critical_mass,
    local_virial_bound,
    radial_sobolev_ratio,
    spacetime_exponents,
    virial,
)
from src.errors import ConfigError, FieldError, SolverError
from src.functionals import FieldSpec, FunctionalReport, evaluate, report
from src.grid import RadialField, RadialGrid, flux_laplacian_bands, integrate
from src.tridiag import solve_tridiag, tridiag_matvec

logger = logging.getLogger(__name__)

# outer band watched for boundary contamination and damped by the sponge
BAND_FRACTION = 0.1
CONTAMINATION_FRACTION = 1e-3
SPONGE_STRENGTH = 10.0


@dataclass(frozen=True)
class SolverConfig:
    """
    Time-stepping parameters.

    Raises:
        ConfigError: If dt > t_final, dt_min >= dt, blowup_factor <= 1 or a
            step count is not positive
    """

    dt: float
    t_final: float
    blowup_factor: float = 1e4
    dt_min: float = 1e-9
    observe_every: int = 10
    boundary_tol: float = 1e-6
    sponge: bool = False

    def __post_init__(self):
        if not (self.dt > 0 and self.t_final > 0):
            raise ConfigError("dt and t_final must be positive")
        if self.dt > self.t_final:
            raise ConfigError(f"dt={self.dt:g} exceeds t_final={self.t_final:g}")
        if not 0 < self.dt_min < self.dt:
            raise ConfigError(f"need 0 < dt_min < dt, got dt_min={self.dt_min:g}")
        if self.blowup_factor <= 1:
            raise ConfigError("blowup_factor must exceed 1")
        if self.observe_every < 1:
            raise ConfigError("observe_every must be at least 1")


class OutcomeKind(Enum):
    """How a run ended."""
    BLOW_UP = auto()
    REACHED_T_FINAL = auto()
    BOUNDARY_CONTAMINATED = auto()
    STEP_UNDERFLOW = auto()


@dataclass(frozen=True)
class Outcome:
    """End state of a run; t_stop is the time of the final observation."""

    kind: OutcomeKind
    t_stop: float


@dataclass(frozen=True)
class Observation:
    """Everything recorded at one observation time."""

    t: float
    dt: float
    report: FunctionalReport
    virials: Tuple[VirialSample, ...]
    local_virials: Tuple[VirialSample, ...]
    exterior: Tuple[float, ...]
    st_integrals: Tuple[float, float]
    interior_critical: float
    band_mass: float
    glassey: GlasseyCheck
    sobolev: Tuple[float, ...]
    local_bounds: Tuple[float, ...]


@dataclass
class SimulationTrace:
    """
    The record of one run. Observations are appended and never changed.

    `virials` use the weight that equals |x|^2 near the origin,
    `local_virials` the mass-localizing one.
    """

    grid: RadialGrid
    virial_radii: Tuple[float, ...]
    sponge: bool = False
    observations: List[Observation] = field(default_factory=list)
    outcome: Optional[Outcome] = None
    final_field: Optional[RadialField] = None

    def __len__(self) -> int:
        return len(self.observations)

    @property
    def times(self) -> np.ndarray:
        return np.array([o.t for o in self.observations])

    @property
    def reports(self) -> List[FunctionalReport]:
        return [o.report for o in self.observations]

    @property
    def grad_sq_series(self) -> np.ndarray:
        return np.array([o.report.grad_norm_sq for o in self.observations])

    @property
    def mass_series(self) -> np.ndarray:
        return np.array([o.report.mass for o in self.observations])

    @property
    def energy_series(self) -> np.ndarray:
        return np.array([o.report.energy for o in self.observations])

    def virial_series(self, index: int, local: bool = False) -> List[VirialSample]:
        """Virial samples for virial_radii[index] over time."""
        if local:
            return [o.local_virials[index] for o in self.observations]
        return [o.virials[index] for o in self.observations]

    def exterior_series(self, index: int) -> np.ndarray:
        return np.array([o.exterior[index] for o in self.observations])

    def sobolev_series(self, index: int) -> np.ndarray:
        return np.array([o.sobolev[index] for o in self.observations])

    def st_integral_series(self) -> Tuple[np.ndarray, np.ndarray]:
        """Per-observation integral of |u|^q1 and |u|^q2."""
        values = np.array([o.st_integrals for o in self.observations]).reshape(-1, 2)
        return values[:, 0], values[:, 1]

    @property
    def interior_critical_series(self) -> np.ndarray:
        return np.array([o.interior_critical for o in self.observations])

    def mass_drift(self) -> float:
        """max_t |M(t) - M(0)| / M(0), 0 for the zero field."""
        mass = self.mass_series
        if len(mass) == 0 or mass[0] == 0:
            return 0.0
        return float(np.max(np.abs(mass - mass[0])) / mass[0])

    def energy_drift(self, m: float) -> float:
        """max_t |E(t) - E(0)| / (|E(0)| + m)."""
        energy = self.energy_series
        if len(energy) == 0:
            return 0.0
        return float(np.max(np.abs(energy - energy[0])) / (abs(energy[0]) + m))


# ---------------------------------------------------------------------------
# Sub-steps
# ---------------------------------------------------------------------------


def _phase_rotate(u: np.ndarray, dt: float, dim: int) -> np.ndarray:
    mod = np.abs(u)
    return u * np.exp(1j * dt * (mod ** (4.0 / (dim - 2)) - mod ** (4.0 / (dim - 1))))


def nonlinear_phase_step(f: RadialField, dt: float) -> RadialField:
    """
    Exact flow of i u_t = -|u|^(4/(d-2)) u + |u|^(4/(d-1)) u over dt.

    |u| is constant along this flow, so the solution is a pointwise phase
    rotation.

    Raises:
        FieldError: If the field has non-finite samples
    """
    if not np.all(np.isfinite(f.values)):
        raise FieldError("nonlinear step got non-finite samples")
    return f.with_values(_phase_rotate(f.values, dt, f.grid.dim))


class LinearPropagator:
    """
    Crank-Nicolson propagator (I - i dt/2 A) u+ = (I + i dt/2 A) u for the
    conservative radial Laplacian A on nodes 1..n-2.

    The wall node stays 0 and node 0, which has zero quadrature weight, is
    refilled from the even extension u_0 = (4 u_1 - u_2) / 3.
    """

    def __init__(self, grid: RadialGrid):
        """
        Initialize a new LinearPropagator.

        Args:
            grid: The grid to propagate on
        """
        self._grid = grid
        lower, diag, upper = flux_laplacian_bands(grid)
        self._lower = lower.astype(complex)
        self._diag = diag.astype(complex)
        self._upper = upper.astype(complex)
        self._cache: Dict[float, Tuple[np.ndarray, np.ndarray, np.ndarray]] = {}

    @property
    def grid(self) -> RadialGrid:
        return self._grid

    def _implicit_bands(self, dt: float):
        bands = self._cache.get(dt)
        if bands is None:
            half = 0.5j * dt
            bands = (-half * self._lower, 1.0 - half * self._diag, -half * self._upper)
            self._cache[dt] = bands
        return bands

    def step(self, u: np.ndarray, dt: float) -> np.ndarray:
        """
        Advance raw samples by dt.

        Raises:
            SolverError: If the tridiagonal elimination breaks down
        """
        inner = np.ascontiguousarray(u[1:-1], dtype=complex)
        rhs = inner + 0.5j * dt * tridiag_matvec(self._lower, self._diag, self._upper, inner)
        a, b, c = self._implicit_bands(dt)
        solved = solve_tridiag(a, b, c, rhs)
        if not np.all(np.isfinite(solved)):
            raise SolverError("Crank-Nicolson elimination hit a zero pivot")
        out = np.empty_like(u, dtype=complex)
        out[1:-1] = solved
        out[-1] = 0.0
        out[0] = (4.0 * out[1] - out[2]) / 3.0
        return out


def linear_step(f: RadialField, dt: float) -> RadialField:
    """One Crank-Nicolson step of i u_t + Delta u = 0."""
    return f.with_values(LinearPropagator(f.grid).step(f.values, dt))


def strang_step(u: np.ndarray, dt: float, propagator: LinearPropagator) -> np.ndarray:
    """Half nonlinear, full linear, half nonlinear."""
    dim = propagator.grid.dim
    u = _phase_rotate(u, 0.5 * dt, dim)
    u = propagator.step(u, dt)
    return _phase_rotate(u, 0.5 * dt, dim)


def splitting_defect(f: RadialField, dt: float) -> float:
    """
    Relative L2 gap between one Strang step of size dt and two of size dt/2.

    The local error of the scheme is O(dt^3), so halving dt should shrink
    this by about 8.
    """
    propagator = LinearPropagator(f.grid)
    u = np.array(f.values, dtype=complex)
    u[-1] = 0.0
    once = strang_step(u, dt, propagator)
    twice = strang_step(strang_step(u, 0.5 * dt, propagator), 0.5 * dt, propagator)
    weights = f.grid.weights
    return float(np.sqrt(np.dot(weights, np.abs(once - twice) ** 2) / np.dot(weights, np.abs(u) ** 2)))


# ---------------------------------------------------------------------------
# Driver
# ---------------------------------------------------------------------------


class ObservationRecorder:
    """
    Builds Observations for a fixed grid and set of virial radii.

    With the threshold m known, the Glassey chain is checked against it too.
    """

    def __init__(self, grid: RadialGrid, radii: Tuple[float, ...], m: Optional[float] = None):
        self.grid = grid
        self.radii = radii
        self.m = m
        self.q1, self.q2 = spacetime_exponents(grid.dim)
        self.band = grid.nodes >= (1.0 - BAND_FRACTION) * grid.r_max
        self.interior_radius = grid.r_max / 10.0

    def observe(self, t: float, dt: float, f: RadialField) -> Observation:
        mod = f.modulus
        rep = report(f)
        return Observation(
            t=t,
            dt=dt,
            report=rep,
            virials=tuple(virial(f, R, CutoffKind.QUADRATIC_CORE) for R in self.radii),
            local_virials=tuple(virial(f, R, CutoffKind.MASS_LOCALIZING) for R in self.radii),
            exterior=tuple(exterior_energy(f, R) for R in self.radii),
            st_integrals=(integrate(self.grid, mod**self.q1), integrate(self.grid, mod**self.q2)),
            interior_critical=interior_critical_mass(f, self.interior_radius),
            band_mass=0.5 * integrate(self.grid, np.where(self.band, mod**2, 0.0)),
            glassey=glassey_bound(rep, self.m),
            sobolev=tuple(radial_sobolev_ratio(f, R) for R in self.radii),
            local_bounds=tuple(local_virial_bound(f, R) for R in self.radii),
        )


def _sponge_profile(grid: RadialGrid) -> np.ndarray:
    edge = (1.0 - BAND_FRACTION) * grid.r_max
    depth = np.clip((grid.nodes - edge) / (BAND_FRACTION * grid.r_max), 0.0, None)
    return SPONGE_STRENGTH * depth**2


def evolve(
    u0: Union[FieldSpec, RadialField],
    grid: RadialGrid,
    cfg: SolverConfig,
    virial_radii: Sequence[float] = (),
    m: Optional[float] = None,
) -> SimulationTrace:
    """
    Integrate from u0 until t_final or a stopping condition.

    The datum is projected onto u(r_max) = 0 first. Observables are recorded
    at t = 0, every cfg.observe_every steps and at the final time. At each
    observation the run stops with BLOW_UP once ||grad u||^2 reaches
    blowup_factor times its initial value and, sponge off, with
    BOUNDARY_CONTAMINATED once the outer-band mass has grown by more than
    1e-3 M(0). dt halves when ||grad u||^2 doubled since the previous
    observation and doubles back (up to cfg.dt) when it decreased;
    STEP_UNDERFLOW ends the run once dt < dt_min. Passing the threshold m
    lets each observation check the lower link of the Glassey chain.

    Raises:
        SolverError: Wrapping any sub-step failure, with the partial trace
    """
    f0 = u0 if isinstance(u0, RadialField) else evaluate(u0, grid)
    values = np.array(f0.values, dtype=complex)
    wall = np.abs(values[grid.nodes >= (1.0 - BAND_FRACTION) * grid.r_max])
    if wall.size and np.max(wall) > cfg.boundary_tol:
        logger.warning("datum reaches %.3g in the outer band; the wall will reflect it", np.max(wall))
    values[-1] = 0.0

    radii = tuple(float(R) for R in virial_radii)
    recorder = ObservationRecorder(grid, radii, m)
    propagator = LinearPropagator(grid)
    damping = _sponge_profile(grid) if cfg.sponge else None
    trace = SimulationTrace(grid=grid, virial_radii=radii, sponge=cfg.sponge)

    t = 0.0
    dt = cfg.dt
    first = recorder.observe(t, dt, RadialField(grid, values))
    trace.observations.append(first)
    grad0 = first.report.grad_norm_sq
    mass0 = first.report.mass
    band0 = first.band_mass
    previous_grad = grad0
    steps = 0
    logger.debug("evolve on %s: M(0)=%.6g, ||grad u0||^2=%.6g", grid, mass0, grad0)

    def finish(kind: OutcomeKind) -> SimulationTrace:
        trace.outcome = Outcome(kind, t)
        trace.final_field = RadialField(grid, values)
        if kind is not OutcomeKind.REACHED_T_FINAL:
            logger.info("run stopped with %s at t=%.6g", kind.name, t)
        return trace

    try:
        while True:
            step = min(dt, cfg.t_final - t)
            values = strang_step(values, step, propagator)
            if damping is not None:
                values = values * np.exp(-step * damping)
            t += step
            if step < dt or cfg.t_final - t <= 1e-12 * cfg.t_final:
                t = cfg.t_final
            steps += 1
            at_end = t >= cfg.t_final
            if steps % cfg.observe_every and not at_end:
                continue

            obs = recorder.observe(t, dt, RadialField(grid, values))
            trace.observations.append(obs)
            grad = obs.report.grad_norm_sq
            logger.debug("t=%.6g dt=%.3g M=%.15g E=%.10g grad=%.6g", t, dt, obs.report.mass, obs.report.energy, grad)

            if grad0 > 0 and grad >= cfg.blowup_factor * grad0:
                return finish(OutcomeKind.BLOW_UP)
            if not cfg.sponge and mass0 > 0 and obs.band_mass - band0 > CONTAMINATION_FRACTION * mass0:
                logger.warning("outer-band mass grew by %.3g at t=%.6g", obs.band_mass - band0, t)
                return finish(OutcomeKind.BOUNDARY_CONTAMINATED)
            if at_end:
                return finish(OutcomeKind.REACHED_T_FINAL)

            if previous_grad > 0 and grad >= 2.0 * previous_grad:
                dt *= 0.5
                logger.debug("gradient doubled, dt -> %.3g", dt)
                if dt < cfg.dt_min:
                    return finish(OutcomeKind.STEP_UNDERFLOW)
            elif grad < previous_grad and dt < cfg.dt:
                dt = min(2.0 * dt, cfg.dt)
            previous_grad = grad
    except (FieldError, SolverError) as exc:
        raise SolverError(f"time stepping failed at t={t:.6g}: {exc}", trace) from exc
    except FloatingPointError as exc:
        raise SolverError(f"floating-point failure at t={t:.6g}: {exc}", trace) from exc
