"""
MÓDULO: PANEL
Responsabilidad: Tipos de dominio del panel longitudinal (trayectorias por unidad),
validación y transformaciones de variables. Todo es inmutable: se puede compartir
entre procesos de trabajo sin copias defensivas.
"""
import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property
from typing import NamedTuple, Tuple

import numpy as np

from modules.errors import PanelValidationError, TransformDomainError
from modules.gee import LinkFamily

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Trajectory:
    unit_id: str
    times: np.ndarray
    outcomes: np.ndarray
    doses: np.ndarray
    covariates: np.ndarray

    def __post_init__(self):
        times = np.array(self.times, dtype=np.int64)
        outcomes = np.array(self.outcomes, dtype=float)
        doses = np.array(self.doses, dtype=float)
        covariates = np.array(self.covariates, dtype=float)
        k = len(times)
        if k < 1:
            raise PanelValidationError(f"Unidad {self.unit_id}: trayectoria vacía")
        if covariates.ndim == 1:
            covariates = covariates.reshape(k, -1)
        if not (len(outcomes) == len(doses) == covariates.shape[0] == k):
            raise PanelValidationError(
                f"Unidad {self.unit_id}: longitudes distintas "
                f"(tiempos={k}, y={len(outcomes)}, d={len(doses)}, x={covariates.shape[0]})"
            )
        if np.any(np.diff(times) <= 0):
            raise PanelValidationError(f"Unidad {self.unit_id}: tiempos no estrictamente crecientes")
        for name, arr in (("outcome", outcomes), ("dose", doses), ("covariates", covariates)):
            if not np.all(np.isfinite(arr)):
                raise PanelValidationError(f"Unidad {self.unit_id}: valores faltantes en {name}")
        for arr in (times, outcomes, doses, covariates):
            arr.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "outcomes", outcomes)
        object.__setattr__(self, "doses", doses)
        object.__setattr__(self, "covariates", covariates)

    @property
    def n_times(self):
        return len(self.times)

    @property
    def n_covariates(self):
        return self.covariates.shape[1]


class RowTable(NamedTuple):
    """Vista apilada (fila = unidad × tiempo) que consumen los estimadores."""

    y: np.ndarray
    d: np.ndarray
    X: np.ndarray
    groups: np.ndarray
    covariate_names: Tuple[str, ...]

    @property
    def n_rows(self):
        return len(self.y)


class PooledRow(NamedTuple):
    unit_index: int
    time: int
    y: float
    d: float
    x: np.ndarray


@dataclass(frozen=True, eq=False)
class PanelDataset:
    trajectories: Tuple[Trajectory, ...]
    family: LinkFamily = LinkFamily.GAUSSIAN_IDENTITY
    covariate_names: Tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        trajectories = tuple(self.trajectories)
        family = LinkFamily(self.family)
        names = tuple(self.covariate_names)
        if not trajectories:
            raise PanelValidationError("El panel no tiene trayectorias")
        ids = [t.unit_id for t in trajectories]
        if len(set(ids)) != len(ids):
            raise PanelValidationError("unit_id repetido en el panel")
        for traj in trajectories:
            if traj.n_covariates != len(names):
                raise PanelValidationError(
                    f"Unidad {traj.unit_id}: {traj.n_covariates} covariables, se esperaban {len(names)}"
                )
            if family is LinkFamily.POISSON_LOG:
                y = traj.outcomes
                if np.any(y < 0) or np.any(y != np.round(y)):
                    raise PanelValidationError(
                        f"Unidad {traj.unit_id}: la familia Poisson exige conteos enteros ≥ 0"
                    )
        object.__setattr__(self, "trajectories", trajectories)
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "covariate_names", names)

    @property
    def n_units(self):
        return len(self.trajectories)

    @property
    def n_covariates(self):
        return len(self.covariate_names)

    @property
    def n_rows(self):
        return sum(t.n_times for t in self.trajectories)

    @cached_property
    def row_slices(self):
        """slice de filas de cada unidad dentro de `table`."""
        bounds = np.concatenate([[0], np.cumsum([t.n_times for t in self.trajectories])])
        return tuple(slice(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]))

    @cached_property
    def table(self):
        trajs = self.trajectories
        X = np.vstack([t.covariates for t in trajs]) if self.n_covariates else np.zeros((self.n_rows, 0))
        table = RowTable(
            y=np.concatenate([t.outcomes for t in trajs]),
            d=np.concatenate([t.doses for t in trajs]),
            X=X,
            groups=np.repeat(np.arange(self.n_units), [t.n_times for t in trajs]),
            covariate_names=self.covariate_names,
        )
        for arr in table[:4]:
            arr.setflags(write=False)
        return table

    def unit_index(self, unit_id):
        for i, traj in enumerate(self.trajectories):
            if traj.unit_id == unit_id:
                return i
        raise KeyError(unit_id)


def pooled_rows(data):
    """Filas (unidad, tiempo, y, d, x) en orden determinista: unidad y luego tiempo."""
    return [
        PooledRow(i, int(t), float(y), float(d), x)
        for i, traj in enumerate(data.trajectories)
        for t, y, d, x in zip(traj.times, traj.outcomes, traj.doses, traj.covariates)
    ]


# ----------------------------------------------------------------------------
# Transformaciones
# ----------------------------------------------------------------------------
class TransformKind(str, Enum):
    IDENTITY = "identity"
    LOG = "log"
    LOG1P = "log1p"


@dataclass(frozen=True)
class Transform:
    kind: TransformKind = TransformKind.IDENTITY

    def __post_init__(self):
        object.__setattr__(self, "kind", TransformKind(self.kind))

    def check_domain(self, values):
        """Índice del primer valor fuera de dominio, o None."""
        values = np.asarray(values, dtype=float)
        if self.kind is TransformKind.LOG:
            bad = np.flatnonzero(~(values > 0))
        elif self.kind is TransformKind.LOG1P:
            bad = np.flatnonzero(~(values > -1))
        else:
            return None
        return int(bad[0]) if len(bad) else None

    def __call__(self, values):
        values = np.asarray(values, dtype=float)
        if self.kind is TransformKind.LOG:
            return np.log(values)
        if self.kind is TransformKind.LOG1P:
            return np.log1p(values)
        return values.copy()


def _column_getter(data, column):
    if column == "outcome":
        return lambda t: t.outcomes, "outcomes", None
    if column == "dose":
        return lambda t: t.doses, "doses", None
    if column in data.covariate_names:
        j = data.covariate_names.index(column)
        return lambda t: t.covariates[:, j], "covariates", j
    raise KeyError(f"Columna desconocida: {column!r}")


def apply_transform(data, column, t):
    """Nuevo panel con `column` transformada elemento a elemento; `data` queda intacto."""
    t = t if isinstance(t, Transform) else Transform(t)
    getter, attr, j = _column_getter(data, column)

    new_trajs = []
    for traj in data.trajectories:
        values = getter(traj)
        bad = t.check_domain(values)
        if bad is not None:
            raise TransformDomainError(
                t.kind.value, float(values[bad]), f"unidad={traj.unit_id}, tiempo={int(traj.times[bad])}"
            )
        if attr == "covariates":
            cov = traj.covariates.copy()
            cov[:, j] = t(values)
            new_trajs.append(replace(traj, covariates=cov))
        else:
            new_trajs.append(replace(traj, **{attr: t(values)}))

    logger.debug("Transformación %s aplicada a '%s'", t.kind.value, column)
    # Un outcome Poisson transformado deja de ser conteo: PanelDataset lo rechaza
    return PanelDataset(tuple(new_trajs), data.family, data.covariate_names)
