"""
MÓDULO: RESAMPLE
Responsabilidad: Generar realizaciones del posterior no paramétrico: pesos
Dirichlet planos (bootstrap Bayesiano), pesos stick-breaking y conjuntos del
posterior DP que mezclan trayectorias observadas con trayectorias de la medida base.

El remuestreo es siempre por sujeto: cada átomo copia todas las filas de una unidad.
"""
import logging
from dataclasses import dataclass, replace
from enum import Enum
from functools import cached_property
from typing import NamedTuple, Optional

import numpy as np

from modules.panel import RowTable

logger = logging.getLogger(__name__)

EPSILON = 1e-8


@dataclass(frozen=True)
class RngStream:
    """Flujo reproducible: el mismo (seed, stream) da la misma secuencia en cualquier proceso."""

    seed: int
    stream: int = 0

    def generator(self):
        return np.random.default_rng(np.random.SeedSequence([int(self.seed), int(self.stream)]))


def derive_seed(seed, index):
    """Semilla de 64 bits para un sub-experimento (p. ej. la réplica `index`)."""
    state = np.random.SeedSequence([int(seed), int(index)]).generate_state(2, dtype=np.uint32)
    return int(state[0]) << 32 | int(state[1])


def as_generator(rng):
    return rng.generator() if isinstance(rng, RngStream) else rng


class DrawKind(str, Enum):
    BB = "bb"
    DP = "dp"


class Origin(str, Enum):
    EMPIRICAL = "empirical"
    BASE_MEASURE = "base_measure"


@dataclass(frozen=True, eq=False)
class StickWeights:
    weights: np.ndarray
    alpha_n: float
    epsilon: float
    truncated_at: int
    tail_mass: float

    def __len__(self):
        return len(self.weights)


def dirichlet_flat_weights(n, rng):
    """Dirichlet(1,…,1) como exponenciales unitarias normalizadas."""
    if n < 1:
        raise ValueError("n debe ser ≥ 1")
    e = as_generator(rng).exponential(1.0, size=n)
    return e / e.sum()


def stick_breaking(alpha_n, epsilon, j_max, rng, fractions=None):
    """
    p_1 = V_1, p_j = V_j·Π_{k<j}(1−V_k) con V_j ~ Beta(1, alpha_n) por CDF inversa
    1 − u^(1/alpha_n). Se corta en el primer j con masa restante < epsilon (o j_max)
    y se renormaliza. `fractions` fija los V_j (gancho de prueba).
    """
    if alpha_n <= 0:
        raise ValueError("alpha_n debe ser positivo")
    if not 0 < epsilon < 1:
        raise ValueError("epsilon debe estar en (0, 1)")
    if j_max < 1:
        raise ValueError("j_max debe ser ≥ 1")
    if fractions is None:
        u = as_generator(rng).random(j_max)
        v = 1.0 - u ** (1.0 / alpha_n)
    else:
        v = np.resize(np.asarray(fractions, dtype=float), j_max)

    remaining = np.cumprod(1.0 - v)
    p = v * np.concatenate([[1.0], remaining[:-1]])
    below = np.flatnonzero(remaining < epsilon)
    j = int(below[0]) + 1 if len(below) else j_max
    raw = p[:j]
    tail = float(remaining[j - 1])
    return StickWeights(raw / raw.sum(), float(alpha_n), float(epsilon), j, tail)


class Atom(NamedTuple):
    trajectory: object
    origin: Origin


@dataclass(frozen=True, eq=False)
class ResampleDraw:
    data: object
    source_index: np.ndarray
    origin: np.ndarray  # True = base_measure
    weights: np.ndarray
    kind: DrawKind
    stick: Optional[StickWeights] = None
    outcomes: Optional[np.ndarray] = None  # outcomes por fila si fueron regenerados

    def __post_init__(self):
        if not (len(self.source_index) == len(self.origin) == len(self.weights)):
            raise ValueError("Átomos y pesos deben tener la misma longitud")

    @property
    def n_atoms(self):
        return len(self.source_index)

    @property
    def atoms(self):
        trajs = self.data.trajectories
        return [
            Atom(trajs[i], Origin.BASE_MEASURE if base else Origin.EMPIRICAL)
            for i, base in zip(self.source_index, self.origin)
        ]

    @cached_property
    def row_index(self):
        slices = self.data.row_slices
        return np.concatenate([np.arange(slices[i].start, slices[i].stop) for i in self.source_index])

    @cached_property
    def atom_sizes(self):
        return np.array([self.data.trajectories[i].n_times for i in self.source_index])

    @cached_property
    def row_atom(self):
        return np.repeat(np.arange(self.n_atoms), self.atom_sizes)

    @cached_property
    def table(self):
        """Filas apiladas del draw; la unidad de cada fila es el índice del átomo."""
        base = self.data.table
        idx = self.row_index
        y = base.y[idx] if self.outcomes is None else self.outcomes
        return RowTable(y, base.d[idx], base.X[idx], self.row_atom, base.covariate_names)

    @property
    def row_fit_weights(self):
        """Peso del átomo en cada una de sus filas (función de estimación por sujeto)."""
        return self.weights[self.row_atom]

    @property
    def row_average_weights(self):
        """Peso del átomo repartido por igual entre sus filas (promedios de APO)."""
        return (self.weights / self.atom_sizes)[self.row_atom]

    @property
    def row_is_base(self):
        return self.origin[self.row_atom]

    def with_outcomes(self, outcomes):
        outcomes = np.asarray(outcomes, dtype=float)
        if len(outcomes) != len(self.row_index):
            raise ValueError("Número de outcomes regenerados distinto del número de filas")
        return replace(self, outcomes=outcomes)


def draw_bb(data, rng, equal_weights=False):
    """Átomos = las n trayectorias observadas en orden, con pesos Dirichlet planos."""
    n = data.n_units
    if n < 2:
        raise ValueError("El bootstrap Bayesiano requiere al menos 2 unidades")
    weights = np.full(n, 1.0 / n) if equal_weights else dirichlet_flat_weights(n, rng)
    return ResampleDraw(
        data=data,
        source_index=np.arange(n),
        origin=np.zeros(n, dtype=bool),
        weights=weights,
        kind=DrawKind.BB,
    )


def draw_dp(data, alpha, j_target, gen, rng, epsilon=EPSILON):
    """
    Posterior DP(α+n, G_n) truncado: pesos stick-breaking(α+n) y átomos i.i.d.;
    cada átomo copia una trayectoria uniforme y con probabilidad α/(α+n) queda
    marcado como medida base. `gen.regenerate(draw, rng)` devuelve los outcomes por
    fila con los de la medida base regenerados; con `gen=None` se conservan los observados.
    """
    n = data.n_units
    if n < 2:
        raise ValueError("El posterior DP requiere al menos 2 unidades")
    if alpha <= 0:
        raise ValueError("alpha debe ser positivo")
    generator = as_generator(rng)
    stick = stick_breaking(alpha + n, epsilon, j_target, generator)
    j = stick.truncated_at
    origin = generator.random(j) < alpha / (alpha + n)
    source = generator.integers(0, n, size=j)
    draw = ResampleDraw(
        data=data,
        source_index=source,
        origin=origin,
        weights=stick.weights,
        kind=DrawKind.DP,
        stick=stick,
    )
    if gen is not None:
        draw = draw.with_outcomes(gen.regenerate(draw, generator))
    return draw
