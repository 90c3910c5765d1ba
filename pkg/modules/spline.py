"""
MÓDULO: SPLINE
Responsabilidad: Base B-spline cúbica (nodos de frontera repetidos) para la dosis
y para el GPS estimado. Fuera de [lo, hi] la evaluación se recorta a la frontera.
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import BSpline

from modules.errors import DegenerateRangeError

logger = logging.getLogger(__name__)

GRADO = 3
NODOS_INTERIORES = 2


@dataclass(frozen=True, eq=False)
class SplineBasis:
    interior_knots: np.ndarray
    boundary_knots: tuple
    degree: int = GRADO

    def __post_init__(self):
        lo, hi = (float(v) for v in self.boundary_knots)
        knots = np.asarray(self.interior_knots, dtype=float)
        if not lo < hi:
            raise DegenerateRangeError(f"Rango degenerado para la base: [{lo}, {hi}]")
        if len(knots) and (np.any(knots <= lo) or np.any(knots >= hi) or np.any(np.diff(knots) <= 0)):
            raise ValueError(f"Nodos interiores inválidos {knots} para [{lo}, {hi}]")
        object.__setattr__(self, "boundary_knots", (lo, hi))
        object.__setattr__(self, "interior_knots", knots)

    @property
    def basis_dim(self):
        return len(self.interior_knots) + self.degree + 1

    @property
    def knot_vector(self):
        lo, hi = self.boundary_knots
        k = self.degree + 1
        return np.concatenate([np.full(k, lo), self.interior_knots, np.full(k, hi)])

    def design_matrix(self, x):
        """Matriz (len(x) × basis_dim) evaluada con recorte a la frontera."""
        lo, hi = self.boundary_knots
        x = np.clip(np.atleast_1d(np.asarray(x, dtype=float)), lo, hi)
        return BSpline.design_matrix(x, self.knot_vector, self.degree).toarray()


def build_basis(values, n_interior=NODOS_INTERIORES):
    """Frontera en min/max de `values`; nodos interiores en cuantiles equiespaciados."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("build_basis requiere al menos un valor")
    if n_interior < 0:
        raise ValueError("n_interior debe ser ≥ 0")
    lo, hi = float(values.min()), float(values.max())
    if not lo < hi:
        raise DegenerateRangeError(f"Todos los valores son iguales ({lo}); no hay rango para la base")

    probs = np.arange(1, n_interior + 1) / (n_interior + 1)
    knots = np.unique(np.quantile(values, probs))
    knots = knots[(knots > lo) & (knots < hi)]
    if len(knots) < n_interior:
        logger.warning("Se descartaron %d nodos repetidos o en la frontera", n_interior - len(knots))
    return SplineBasis(knots, (lo, hi))


def eval_basis(b, x):
    return b.design_matrix([x])[0]
