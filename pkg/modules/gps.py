"""
MÓDULO: GPS
Responsabilidad: Score de propensión generalizado para una dosis continua.
Ajusta el modelo de tratamiento (GEE o intercepto aleatorio), evalúa la densidad
Gaussiana e(x;γ) y construye pesos de probabilidad inversa estabilizados.
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Optional, Tuple

import numpy as np
from scipy.stats import norm

from modules.errors import UnidentifiableVarianceError
from modules.gee import GeeDesign, LinkFamily, WorkingCorrelation, fit_gee

logger = logging.getLogger(__name__)

DENSIDAD_MIN = 1e-12
SIGMA2_MIN = 1e-12


class GpsKind(str, Enum):
    GEE = "gee"
    RANDOM_INTERCEPT = "random_intercept"


@dataclass(frozen=True, eq=False)
class RandomIntercept:
    tau2: float
    blup: np.ndarray  # indexado por código de unidad (groups)
    unit_codes: Mapping[str, int] = field(default_factory=dict)

    def intercept(self, unit):
        """BLUP de una unidad por id o por código de fila; 0 para unidades no vistas."""
        code = self.unit_codes.get(unit)
        if code is None and isinstance(unit, (int, np.integer)) and not isinstance(unit, bool):
            code = int(unit)
        if code is None or not 0 <= code < len(self.blup):
            return 0.0
        return float(self.blup[code])

    def lookup(self, units, n):
        units = np.broadcast_to(np.asarray(units), (n,))
        if np.issubdtype(units.dtype, np.integer):
            out = np.zeros(n)
            known = (units >= 0) & (units < len(self.blup))
            out[known] = self.blup[units[known]]
            return out
        return np.array([self.intercept(u) for u in units.tolist()])


@dataclass(frozen=True, eq=False)
class GpsFit:
    gamma: np.ndarray
    sigma2: float
    columns: Tuple[int, ...]
    model_kind: GpsKind = GpsKind.GEE
    random_intercept: Optional[RandomIntercept] = None

    def mean(self, X, units=None):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        mu = self.gamma[0] + X[:, list(self.columns)] @ self.gamma[1:]
        if self.random_intercept is not None and units is not None:
            mu = mu + self.random_intercept.lookup(units, len(mu))
        return mu


@dataclass(frozen=True)
class MarginalDoseFit:
    mu: float
    sigma2: float

    def density(self, d):
        return norm.pdf(np.asarray(d, dtype=float), loc=self.mu, scale=np.sqrt(self.sigma2))


def _columns(table, covariates):
    if covariates is None:
        return tuple(range(table.X.shape[1]))
    return tuple(table.covariate_names.index(c) for c in covariates)


def _table(data):
    return data.table if hasattr(data, "table") else data


def _weights(table, weights):
    if weights is None:
        return np.ones(table.n_rows)
    return np.asarray(weights, dtype=float)


def _treatment_design(table, columns):
    X = np.column_stack([np.ones(table.n_rows), table.X[:, list(columns)]])
    return GeeDesign(table.d, X, table.groups)


def fit_gps_gee(data, covariates=None, weights=None, corr=None):
    """Regresión GEE Gaussiana-identidad de d sobre [1, x]; sigma2 = media ponderada de residuos²."""
    table = _table(data)
    w = _weights(table, weights)
    if np.count_nonzero(w > 0) < 2:
        raise ValueError("El modelo GPS requiere al menos 2 filas con peso positivo")
    columns = _columns(table, covariates)
    design = _treatment_design(table, columns)
    fit = fit_gee(design, LinkFamily.GAUSSIAN_IDENTITY, corr or WorkingCorrelation.independent(), w)
    resid = table.d - design.X @ fit.xi
    sigma2 = float(np.sum(w * resid**2) / np.sum(w))
    return GpsFit(fit.xi, max(sigma2, SIGMA2_MIN), columns, GpsKind.GEE)


def fit_gps_random_intercept(data, covariates=None, weights=None):
    """
    Efectos fijos por mínimos cuadrados ponderados agrupados; tau2 y sigma2 por
    descomposición de momentos entre/dentro de unidades (tau2 recortado en 0) y
    BLUP_i = tau2 / (tau2 + sigma2/K_i) · residuo medio de la unidad.
    """
    table = _table(data)
    w = _weights(table, weights)
    columns = _columns(table, covariates)
    design = _treatment_design(table, columns)

    pos = w > 0
    codes = np.asarray(table.groups).astype(int)
    units = np.unique(codes[pos])
    if len(units) < 2:
        raise UnidentifiableVarianceError("tau2 no identificable con una sola unidad")

    fit = fit_gee(design, LinkFamily.GAUSSIAN_IDENTITY, WorkingCorrelation.independent(), w)
    resid = table.d - design.X @ fit.xi

    n_codes = int(codes.max()) + 1
    w_unit = np.bincount(codes, weights=w, minlength=n_codes)
    k_unit = np.bincount(codes[pos], minlength=n_codes).astype(float)
    has = w_unit > 0
    rbar = np.zeros(n_codes)
    rbar[has] = np.bincount(codes, weights=w * resid, minlength=n_codes)[has] / w_unit[has]

    n_rows = int(pos.sum())
    n_units = len(units)
    within = np.sum(w * (resid - rbar[codes]) ** 2) / np.sum(w)
    if n_rows > n_units:
        within *= n_rows / (n_rows - n_units)
    sigma2 = max(float(within), SIGMA2_MIN)

    grand = np.sum(w_unit[has] * rbar[has]) / np.sum(w_unit[has])
    between = np.sum(w_unit[has] * (rbar[has] - grand) ** 2) / np.sum(w_unit[has])
    between *= n_units / (n_units - 1)
    inv_k = np.sum(w_unit[has] / k_unit[has]) / np.sum(w_unit[has])
    tau2 = float(between - sigma2 * inv_k)
    if tau2 < 0:
        logger.debug("Momento de tau2 negativo (%.3g): se recorta a 0", tau2)
        tau2 = 0.0

    blup = np.zeros(n_codes)
    if tau2 > 0:
        shrink = tau2 / (tau2 + sigma2 / k_unit[has])
        blup[has] = shrink * rbar[has]
    blup.setflags(write=False)
    # Con un PanelDataset los ids de unidad resuelven al mismo código que groups
    trajs = getattr(data, "trajectories", ())
    unit_codes = {t.unit_id: i for i, t in enumerate(trajs)}
    return GpsFit(
        fit.xi, sigma2, columns, GpsKind.RANDOM_INTERCEPT, RandomIntercept(tau2, blup, unit_codes)
    )


def fit_gps(data, kind, covariates=None, weights=None, corr=None):
    if GpsKind(kind) is GpsKind.RANDOM_INTERCEPT:
        return fit_gps_random_intercept(data, covariates, weights)
    return fit_gps_gee(data, covariates, weights, corr)


def gps_density_many(fit, d, X, units=None):
    mu = fit.mean(X, units)
    dens = norm.pdf(np.asarray(d, dtype=float), loc=mu, scale=np.sqrt(fit.sigma2))
    return np.maximum(dens, DENSIDAD_MIN)


def gps_density(fit, d, x, unit=None):
    """
    Densidad N(d; xᵀγ [+ BLUP de la unidad], sigma2), con piso 1e-12.
    `unit` es un id de trayectoria o un código de fila; una unidad no vista aporta 0.
    """
    units = None if unit is None else np.array([unit])
    return float(gps_density_many(fit, np.array([d]), np.atleast_2d(x), units)[0])


def fit_marginal_dose(d, weights=None):
    d = np.asarray(d, dtype=float)
    w = np.ones_like(d) if weights is None else np.asarray(weights, dtype=float)
    mu = float(np.average(d, weights=w))
    sigma2 = float(np.average((d - mu) ** 2, weights=w))
    return MarginalDoseFit(mu, max(sigma2, SIGMA2_MIN))


def stabilized_weights(fit, marg, d, X, units=None, stabilize=True, truncation=None):
    """f_marg(d) / e(x) por fila (o 1/e(x) sin estabilizar), con truncado opcional por percentil."""
    dens = gps_density_many(fit, d, X, units)
    numerator = marg.density(d) if stabilize else 1.0
    weights = numerator / dens
    if truncation is not None:
        cap = np.percentile(weights, truncation)
        weights = np.minimum(weights, cap)
    return weights


def stabilized_weight(fit, marg, d, x, unit=None, stabilize=True):
    units = None if unit is None else np.array([unit])
    return float(stabilized_weights(fit, marg, np.array([d]), np.atleast_2d(x), units, stabilize)[0])
