"""
MÓDULO: GEE
Responsabilidad: Resolver ecuaciones de estimación generalizadas ponderadas
(media marginal Gaussiana-identidad o Poisson-log) por IRLS / Fisher scoring.

Los pesos son pesos de probabilidad: entran linealmente en la función de
estimación, por lo que la solución no cambia al reescalarlos.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
from scipy import linalg
from sklearn.linear_model import LinearRegression

from modules.errors import DivergenceError, SingularDesignError

logger = logging.getLogger(__name__)

TOLERANCIA = 1e-8
MAX_ITER = 100
ETA_MAX = 30.0


class LinkFamily(str, Enum):
    GAUSSIAN_IDENTITY = "gaussian_identity"
    POISSON_LOG = "poisson_log"

    def inverse_link(self, eta):
        if self is LinkFamily.POISSON_LOG:
            return np.exp(eta)
        return np.asarray(eta, dtype=float)

    def mu_eta(self, eta):
        """Derivada dμ/dη."""
        if self is LinkFamily.POISSON_LOG:
            return np.exp(eta)
        return np.ones_like(np.asarray(eta, dtype=float))

    def variance(self, mu):
        if self is LinkFamily.POISSON_LOG:
            return np.asarray(mu, dtype=float)
        return np.ones_like(np.asarray(mu, dtype=float))


class CorrelationKind(str, Enum):
    INDEPENDENT = "independent"
    EXCHANGEABLE = "exchangeable"


@dataclass(frozen=True)
class WorkingCorrelation:
    """Correlación de trabajo. `rho=None` con exchangeable: se estima en cada barrido."""

    kind: CorrelationKind = CorrelationKind.INDEPENDENT
    rho: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", CorrelationKind(self.kind))
        if self.kind is CorrelationKind.INDEPENDENT and self.rho not in (None, 0, 0.0):
            raise ValueError("rho solo aplica a la correlación exchangeable")
        if self.rho is not None and not -1.0 < self.rho < 1.0:
            raise ValueError(f"rho fuera de (-1, 1): {self.rho}")

    @classmethod
    def independent(cls):
        return cls(CorrelationKind.INDEPENDENT)

    @classmethod
    def exchangeable(cls, rho=None):
        return cls(CorrelationKind.EXCHANGEABLE, rho)


@dataclass(frozen=True)
class GeeDesign:
    """Filas de diseño: respuesta, matriz de covariables del modelo y unidad de cada fila."""

    y: np.ndarray
    X: np.ndarray
    groups: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        groups = np.asarray(self.groups)
        if not (len(y) == X.shape[0] == len(groups)):
            raise ValueError(f"Dimensiones inconsistentes: y={len(y)}, X={X.shape}, groups={len(groups)}")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "groups", groups)

    @property
    def n_rows(self):
        return len(self.y)

    @property
    def n_params(self):
        return self.X.shape[1]

    def subset(self, mask):
        return GeeDesign(self.y[mask], self.X[mask], self.groups[mask])


@dataclass(frozen=True)
class GeeFit:
    xi: np.ndarray
    family: LinkFamily
    corr: WorkingCorrelation
    dispersion: float
    converged: bool
    iterations: int
    ee_norm: float  # |U|∞ en la solución con los pesos normalizados a suma 1
    rho: Optional[float] = None

    def predict(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return self.family.inverse_link(X @ self.xi)


def predict_mean(fit, x):
    """g⁻¹(xᵀξ) para un único vector de covariables."""
    x = np.asarray(x, dtype=float)
    if x.shape != fit.xi.shape:
        raise ValueError(f"Vector de longitud {x.shape} no coincide con xi {fit.xi.shape}")
    return float(fit.family.inverse_link(x @ fit.xi))


# ----------------------------------------------------------------------------
# Piezas internas
# ----------------------------------------------------------------------------
def _group_blocks(groups):
    """Índices de fila por unidad, en orden de primera aparición."""
    _, first, inverse = np.unique(groups, return_index=True, return_inverse=True)
    order = np.argsort(first, kind="stable")
    remap = np.empty_like(order)
    remap[order] = np.arange(len(order))
    codes = remap[inverse]
    rows = np.argsort(codes, kind="stable")
    bounds = np.cumsum(np.bincount(codes))
    return np.split(rows, bounds[:-1])


def _exchangeable_inverse(m, rho):
    if m == 1:
        return np.ones((1, 1))
    c = rho / (1.0 + (m - 1) * rho)
    return (np.eye(m) - c * np.ones((m, m))) / (1.0 - rho)


def _estimate_rho(design, family, weights, xi, blocks):
    mu = family.inverse_link(design.X @ xi)
    e = (design.y - mu) / np.sqrt(family.variance(mu))
    phi = np.sum(weights * e**2) / np.sum(weights)
    if phi <= 0:
        return 0.0
    num = den = 0.0
    m_max = 1
    for idx in blocks:
        m_max = max(m_max, len(idx))
        if len(idx) < 2:
            continue
        sw = np.sqrt(weights[idx])
        se = sw * e[idx]
        num += se.sum() ** 2 - np.sum(se**2)
        den += sw.sum() ** 2 - np.sum(weights[idx])
    if den <= 0:
        return 0.0
    rho = num / den / phi
    lower = -1.0 / (m_max - 1) + 1e-6 if m_max > 1 else -0.99
    return float(np.clip(rho, lower, 0.99))


def _score_information(design, family, weights, xi, rho, blocks):
    eta = design.X @ xi
    mu = family.inverse_link(eta)
    dmu = family.mu_eta(eta)
    v = family.variance(mu)
    resid = design.y - mu
    if rho is None or rho == 0.0 or blocks is None:
        a = weights * dmu / v
        U = design.X.T @ (a * resid)
        H = (design.X * (weights * dmu**2 / v)[:, None]).T @ design.X
        return U, H
    p = design.n_params
    U = np.zeros(p)
    H = np.zeros((p, p))
    for idx in blocks:
        D = dmu[idx, None] * design.X[idx]
        s = np.sqrt(weights[idx] / v[idx])
        M = s[:, None] * _exchangeable_inverse(len(idx), rho) * s[None, :]
        U += D.T @ (M @ resid[idx])
        H += D.T @ M @ D
    return U, H


def _starting_values(design, family, weights):
    if family is LinkFamily.GAUSSIAN_IDENTITY:
        return np.zeros(design.n_params)
    # Arranque GLM clásico: μ0 = (y + ȳ)/2 y un paso de mínimos cuadrados ponderados
    ybar = np.average(design.y, weights=weights)
    mu0 = np.maximum((design.y + ybar) / 2.0, 1e-3)
    z = np.log(mu0) + (design.y - mu0) / mu0
    ols = LinearRegression(fit_intercept=False).fit(design.X, z, sample_weight=weights * mu0)
    return np.asarray(ols.coef_, dtype=float)


def _prepare(design, weights):
    w = np.asarray(weights, dtype=float)
    if w.shape != (design.n_rows,):
        raise ValueError(f"Se esperaban {design.n_rows} pesos, llegaron {w.shape}")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ValueError("Los pesos deben ser finitos y no negativos")
    keep = w > 0
    if not keep.any():
        raise ValueError("Se requiere al menos un peso positivo")
    design = design.subset(keep)
    w = w[keep]
    return design, w / w.mean()


def _check_rank(design, weights):
    sqrt_w = np.sqrt(weights)[:, None]
    rank = np.linalg.matrix_rank(design.X * sqrt_w)
    if rank < design.n_params:
        raise SingularDesignError(
            f"Diseño singular: rango {rank} < {design.n_params} parámetros "
            f"({design.n_rows} filas con peso positivo)"
        )


# ----------------------------------------------------------------------------
# Operaciones públicas
# ----------------------------------------------------------------------------
def estimating_equation(xi, design, family, corr, weights):
    """Vector de score ponderado Σ_i D_iᵀ V_i⁻¹ W_i (y_i − μ_i), lineal en los pesos."""
    family = LinkFamily(family)
    xi = np.asarray(xi, dtype=float)
    w = np.asarray(weights, dtype=float)
    blocks = None
    rho = None
    if corr.kind is CorrelationKind.EXCHANGEABLE:
        blocks = _group_blocks(design.groups)
        rho = corr.rho if corr.rho is not None else _estimate_rho(design, family, w, xi, blocks)
    U, _ = _score_information(design, family, w, xi, rho, blocks)
    return U


def fit_gee(design, family, corr, weights, tol=TOLERANCIA, max_iter=MAX_ITER):
    """
    Scoring de Fisher sobre la ecuación de estimación ponderada. Las filas con peso 0
    se descartan. `ee_norm` se evalúa con los pesos normalizados a suma 1, así la
    tolerancia no depende de la escala de los pesos.
    """
    family = LinkFamily(family)
    design, w = _prepare(design, weights)
    _check_rank(design, w)

    exchangeable = corr.kind is CorrelationKind.EXCHANGEABLE
    blocks = _group_blocks(design.groups) if exchangeable else None
    xi = _starting_values(design, family, w)
    rho = corr.rho if exchangeable else None
    coef_converged = False
    iteration = 0

    for iteration in range(1, max_iter + 1):
        if exchangeable and corr.rho is None and iteration > 1:
            rho = _estimate_rho(design, family, w, xi, blocks)
        U, H = _score_information(design, family, w, xi, rho, blocks)
        try:
            step = linalg.solve(H, U, assume_a="pos")
        except (linalg.LinAlgError, ValueError) as exc:
            raise SingularDesignError(f"Matriz de información no invertible: {exc}") from exc
        xi = xi + step
        eta = design.X @ xi
        max_eta = float(np.max(np.abs(eta)))
        if family is LinkFamily.POISSON_LOG and max_eta > ETA_MAX:
            raise DivergenceError(iteration, max_eta)
        if not np.all(np.isfinite(xi)):
            raise DivergenceError(iteration, float("inf"))
        if np.max(np.abs(step)) < tol:
            coef_converged = True
            break

    w_unit = w / w.sum()
    U_final, _ = _score_information(design, family, w_unit, xi, rho, blocks)
    ee_norm = float(np.max(np.abs(U_final)))
    converged = coef_converged and ee_norm < tol
    if not converged:
        logger.warning(
            "GEE sin convergencia tras %d iteraciones (|U|∞=%.3g)", iteration, ee_norm
        )

    mu = family.inverse_link(design.X @ xi)
    pearson = (design.y - mu) ** 2 / family.variance(mu)
    n, p = design.n_rows, design.n_params
    dispersion = float(np.sum(w * pearson) / np.sum(w))
    if n > p:
        dispersion *= n / (n - p)

    return GeeFit(
        xi=xi,
        family=family,
        corr=corr,
        dispersion=max(dispersion, np.finfo(float).tiny),
        converged=converged,
        iterations=iteration,
        ee_norm=ee_norm,
        rho=rho,
    )
