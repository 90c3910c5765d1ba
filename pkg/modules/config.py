"""
MÓDULO: CONFIG
Responsabilidad: Modelos de configuración validados (pydantic). Claves desconocidas
se rechazan y todos los valores por defecto quedan explícitos al serializar.
"""
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from modules.gee import CorrelationKind, LinkFamily
from modules.gps import GpsKind
from modules.knowledge import DOSIS_SIMULACION
from modules.panel import TransformKind

VERSION_CONFIG = 1


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class EstimatorConfig(_Strict):
    method: Literal["cov", "wor"] = "cov"
    resampler: Literal["bb", "dp"] = "dp"
    alpha: float = Field(5.0, gt=0, description="Concentración del DP")
    j_target: int = Field(500, ge=1, description="Truncamiento J del stick-breaking")
    epsilon: float = Field(1e-8, gt=0, lt=1)
    n_draws: int = Field(1000, ge=1, description="Número S de muestras del posterior")
    seed: int = Field(0, ge=0, lt=2**64)
    n_interior_knots: int = Field(2, ge=0)
    family: LinkFamily = LinkFamily.GAUSSIAN_IDENTITY
    corr: CorrelationKind = CorrelationKind.INDEPENDENT
    dose_grid: List[float] = Field(default_factory=lambda: list(DOSIS_SIMULACION))
    gps_kind: GpsKind = GpsKind.GEE
    gps_covariates: Optional[List[str]] = None
    stabilize: bool = True
    weight_truncation: Optional[float] = Field(None, gt=50, le=100)
    synthetic_outcomes: Literal["mixture", "all"] = "mixture"
    base_variance: float = Field(1.0, gt=0)
    outcome_covariates: bool = False
    max_failure_rate: float = Field(0.05, ge=0, lt=1)
    bb_equal_weights: bool = False

    @field_validator("dose_grid")
    @classmethod
    def _grid_increasing(cls, grid):
        if not grid:
            raise ValueError("dose_grid no puede estar vacío")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("dose_grid debe ser estrictamente creciente")
        return grid


class PanelSchema(_Strict):
    unit_id: str = "unit_id"
    time: str = "time"
    outcome: str = "outcome"
    dose: str = "dose"
    covariates: List[str] = Field(default_factory=list)


class TransformSpec(_Strict):
    column: str
    kind: TransformKind


class OutputFiles(_Strict):
    samples: str = "apo_samples.csv"
    summary: str = "apo_summary.csv"
    resolved: str = "resolved-config.json"


class RunConfig(_Strict):
    version: Literal[1] = VERSION_CONFIG
    estimator: EstimatorConfig = Field(default_factory=EstimatorConfig)
    data_schema: PanelSchema = Field(default_factory=PanelSchema, alias="schema")
    transforms: List[TransformSpec] = Field(default_factory=list)
    dose_quantiles: Optional[List[float]] = None
    outputs: OutputFiles = Field(default_factory=OutputFiles)

    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)

    @field_validator("dose_quantiles")
    @classmethod
    def _quantiles_in_unit(cls, qs):
        if qs is not None and (not qs or any(not 0 <= q <= 1 for q in qs)):
            raise ValueError("dose_quantiles debe contener probabilidades en [0, 1]")
        return qs

    @model_validator(mode="after")
    def _columns_known(self):
        known = {"outcome", "dose", *self.data_schema.covariates}
        for spec in self.transforms:
            if spec.column not in known:
                raise ValueError(f"Transformación sobre columna desconocida: {spec.column!r}")
        return self

    def to_json_dict(self):
        return self.model_dump(mode="json", by_alias=True)

