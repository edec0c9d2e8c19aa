"""
Config module with the experiment-file schema.

Experiment files are YAML trees validated by pydantic models; unknown keys are
rejected so a typo can never silently change a run.
"""

import logging
from pathlib import Path
from typing import List, Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from src.errors import ConfigError
from src.functionals import FieldSpec, FieldSpecFactory
from src.solver import SolverConfig

logger = logging.getLogger(__name__)


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)


class GridSettings(_Strict):
    n: int = 4096
    r_max: float = 100.0


class SolverSettings(_Strict):
    """Mirror of solver.SolverConfig with the same cross-field checks."""

    dt: float
    t_final: float
    blowup_factor: float = 1e4
    dt_min: float = 1e-9
    observe_every: int = 10
    boundary_tol: float = 1e-6
    sponge: bool = False

    @model_validator(mode="after")
    def _check_invariants(self) -> "SolverSettings":
        if not (self.dt > 0 and self.t_final > 0):
            raise ValueError("dt and t_final must be positive")
        if self.dt > self.t_final:
            raise ValueError("dt must not exceed t_final")
        if not 0 < self.dt_min < self.dt:
            raise ValueError("need 0 < dt_min < dt")
        if self.blowup_factor <= 1:
            raise ValueError("blowup_factor must exceed 1")
        if self.observe_every < 1:
            raise ValueError("observe_every must be at least 1")
        return self

    def to_solver_config(self) -> SolverConfig:
        return SolverConfig(**self.model_dump())


class InitialDatum(_Strict):
    """
    A closed-form initial datum: a Gaussian or a scaled ground state.
    """

    kind: Literal["gaussian", "ground_state"]
    amplitude: float
    phase: float = 0.0
    width: Optional[float] = None
    lam: Optional[float] = Field(default=None, alias="lambda")

    @model_validator(mode="after")
    def _check_shape(self) -> "InitialDatum":
        if self.kind == "gaussian":
            if self.width is None or self.width <= 0:
                raise ValueError("a gaussian datum needs a positive width")
            if self.lam is not None:
                raise ValueError("lambda only applies to ground_state data")
        elif self.width is not None:
            raise ValueError("width only applies to gaussian data")
        return self

    def with_value(self, parameter: str, value: float) -> "InitialDatum":
        """Copy with one swept parameter replaced."""
        key = "lam" if parameter == "lambda" else parameter
        if key == "width" and self.kind != "gaussian":
            raise ConfigError("cannot sweep width of a ground_state datum")
        if key == "lam" and self.kind != "ground_state":
            raise ConfigError("cannot sweep lambda of a gaussian datum")
        return self.model_copy(update={key: float(value)})

    def to_spec(self, dim: int) -> FieldSpec:
        """The FieldSpec this datum describes in R^dim."""
        if self.kind == "gaussian":
            return FieldSpecFactory.create_gaussian(dim, self.amplitude, self.width, self.phase)
        return FieldSpecFactory.create_ground_state(dim, self.amplitude, self.lam or 0.0, self.phase)


class SweepSettings(_Strict):
    parameter: Literal["amplitude", "width", "lambda", "phase"]
    values: List[float] = Field(min_length=1)


class VerifySettings(_Strict):
    samples: int = Field(default=1000, ge=1)


class ExperimentConfig(_Strict):
    """
    One experiment file.

    dim and the grid are checked later by make_grid, whose rejections are grid
    errors rather than config errors.
    """

    dim: int = 5
    grid: GridSettings = GridSettings()
    solver: Optional[SolverSettings] = None
    initial_data: List[InitialDatum] = Field(default_factory=list)
    virial_radii: List[float] = Field(default_factory=list)
    sweep: Optional[SweepSettings] = None
    output_dir: str = "out"
    seed: int = 0
    verify: VerifySettings = VerifySettings()

    @model_validator(mode="after")
    def _check_radii(self) -> "ExperimentConfig":
        if any(not R > 0 for R in self.virial_radii):
            raise ValueError("virial radii must be positive")
        return self

    def require_solver(self) -> SolverConfig:
        """
        The solver settings, which simulate and dichotomy need.

        Raises:
            ConfigError: If the file has no solver section
        """
        if self.solver is None:
            raise ConfigError("this command needs a solver section")
        return self.solver.to_solver_config()


def parse_config(data: dict) -> ExperimentConfig:
    """
    Validate an already loaded tree.

    Raises:
        ConfigError: On any validation failure
    """
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"invalid config:\n{exc}") from exc


def load_config(path: Path) -> ExperimentConfig:
    """
    Read and validate an experiment file.

    Raises:
        ConfigError: If the file is missing, is not YAML, or fails validation
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path} is not valid YAML: {exc}") from exc
    logger.debug("loaded config %s", path)
    return parse_config(data if data is not None else {})
