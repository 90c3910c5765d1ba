"""
MÓDULO: ENGINE
Responsabilidad: Estimadores Bayesianos dosis-respuesta (COV y WOR) y el bucle del
posterior que produce muestras del APO sobre una grilla de dosis.
Aísla la orquestación (remuestreo → GPS → GEE de outcome → APO) del resto del sistema.
"""
import logging
from dataclasses import dataclass, field
from typing import NamedTuple, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from modules.errors import EstimationError, ExcessFailureError, SingularDesignError
from modules.gee import GeeDesign, GeeFit, LinkFamily, WorkingCorrelation, fit_gee
from modules.gps import GpsFit, fit_gps, fit_marginal_dose, gps_density_many, stabilized_weights
from modules.resample import RngStream, draw_bb, draw_dp
from modules.spline import GRADO, SplineBasis, build_basis

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class DoseResponseFit:
    """
    COV: outcome ~ [1, d, spline(GPS)] (+ x si outcome_covariates).
    WOR: outcome ~ [1, spline(d)] ponderado por pesos GPS estabilizados.
    La primera función de la base se omite: la base suma 1 y sería colineal con el intercepto.
    """

    method: str
    outcome_fit: GeeFit
    gps_fit: GpsFit
    spline: SplineBasis
    outcome_covariates: bool = False


class DrawFailure(NamedTuple):
    draw: int
    cause: str


@dataclass(frozen=True, eq=False)
class ApoPosterior:
    samples: np.ndarray  # S_validos × G
    dose_grid: np.ndarray
    method: str
    resampler: str
    draw_ids: np.ndarray
    failures: Tuple[DrawFailure, ...] = field(default_factory=tuple)

    @property
    def n_draws(self):
        return len(self.draw_ids) + len(self.failures)

    def to_long_frame(self):
        """Formato largo (draw, dose, apo), ordenado por draw y luego dosis."""
        n, g = self.samples.shape
        return pd.DataFrame(
            {
                "draw": np.repeat(self.draw_ids, g),
                "dose": np.tile(self.dose_grid, n),
                "apo": self.samples.ravel(),
            }
        )

    @classmethod
    def from_long_frame(cls, frame, method="", resampler=""):
        missing = {"draw", "dose", "apo"} - set(frame.columns)
        if missing:
            raise ValueError(f"Faltan columnas en las muestras: {sorted(missing)}")
        wide = frame.pivot(index="draw", columns="dose", values="apo").sort_index().sort_index(axis=1)
        if wide.isna().any().any():
            raise ValueError("Muestras incompletas: no todos los draws cubren todas las dosis")
        return cls(
            samples=wide.to_numpy(dtype=float),
            dose_grid=wide.columns.to_numpy(dtype=float),
            method=method,
            resampler=resampler,
            draw_ids=wide.index.to_numpy(),
        )


# ----------------------------------------------------------------------------
# Diseños
# ----------------------------------------------------------------------------
def _corr(cfg):
    return WorkingCorrelation(cfg.corr)


def _spline_columns(spline, values):
    return spline.design_matrix(values)[:, 1:]


def _cov_matrix(spline, with_covariates, d, gps_values, X):
    cols = [np.ones(len(gps_values)), np.broadcast_to(d, gps_values.shape), _spline_columns(spline, gps_values)]
    if with_covariates:
        cols.append(X)
    return np.column_stack(cols)


def _wor_matrix(spline, d):
    d = np.atleast_1d(np.asarray(d, dtype=float))
    return np.column_stack([np.ones(len(d)), _spline_columns(spline, d)])


def _check_rows(weights, cfg):
    needed = cfg.n_interior_knots + GRADO + 1 + 2
    available = int(np.count_nonzero(weights > 0))
    if available < needed:
        raise SingularDesignError(
            f"Solo {available} filas con peso positivo; se requieren al menos {needed}"
        )


# ----------------------------------------------------------------------------
# Estimadores
# ----------------------------------------------------------------------------
def fit_cov(draw, cfg):
    table = draw.table
    w = draw.row_fit_weights
    _check_rows(w, cfg)
    pos = w > 0

    # 1) GPS con los pesos del draw  2) base sobre el GPS  3) GEE del outcome
    gps = fit_gps(table, cfg.gps_kind, cfg.gps_covariates, w, _corr(cfg))
    e = gps_density_many(gps, table.d, table.X, table.groups)
    spline = build_basis(e[pos], cfg.n_interior_knots)
    X = _cov_matrix(spline, cfg.outcome_covariates, table.d, e, table.X)
    design = GeeDesign(table.y, X, table.groups)
    outcome = fit_gee(design, cfg.family, _corr(cfg), w)
    return DoseResponseFit("cov", outcome, gps, spline, cfg.outcome_covariates)


def fit_wor(draw, cfg):
    table = draw.table
    w = draw.row_fit_weights
    _check_rows(w, cfg)
    pos = w > 0

    gps = fit_gps(table, cfg.gps_kind, cfg.gps_covariates, w, _corr(cfg))
    marg = fit_marginal_dose(table.d[pos], w[pos])
    sw = stabilized_weights(
        gps, marg, table.d, table.X, table.groups, cfg.stabilize, cfg.weight_truncation
    )
    spline = build_basis(table.d[pos], cfg.n_interior_knots)
    design = GeeDesign(table.y, _wor_matrix(spline, table.d), table.groups)
    outcome = fit_gee(design, cfg.family, _corr(cfg), w * sw)
    return DoseResponseFit("wor", outcome, gps, spline)


def fit_dose_response(draw, cfg):
    return fit_cov(draw, cfg) if cfg.method == "cov" else fit_wor(draw, cfg)


def fitted_values(fit, draw):
    """Medias ajustadas por fila del draw a la dosis observada."""
    table = draw.table
    if fit.method == "wor":
        return fit.outcome_fit.predict(_wor_matrix(fit.spline, table.d))
    e = gps_density_many(fit.gps_fit, table.d, table.X, table.groups)
    return fit.outcome_fit.predict(_cov_matrix(fit.spline, fit.outcome_covariates, table.d, e, table.X))


def apo_at(fit, d, draw=None):
    """
    WOR: g⁻¹([1, spline(d)]ᵀξ).
    COV: promedio ponderado sobre las filas del draw de g⁻¹([1, d, spline(ê(d|x))]ᵀξ),
    con ê evaluado en la dosis contrafactual d y el peso de cada átomo repartido entre sus filas.
    """
    if fit.method == "wor":
        return float(fit.outcome_fit.predict(_wor_matrix(fit.spline, d))[0])
    if draw is None:
        raise ValueError("El APO del método COV requiere los átomos y pesos del draw")
    table = draw.table
    a = draw.row_average_weights
    counterfactual = np.full(table.n_rows, float(d))
    e = gps_density_many(fit.gps_fit, counterfactual, table.X, table.groups)
    mu = fit.outcome_fit.predict(_cov_matrix(fit.spline, fit.outcome_covariates, counterfactual, e, table.X))
    return float(np.sum(a * mu) / np.sum(a))


@dataclass(frozen=True)
class SyntheticOutcomeGenerator:
    """
    Medida base condicional: ajusta un GPS y un outcome COV preliminares sobre el draw
    (outcomes base) y regenera los outcomes de los átomos de la medida base:
    Gaussiana N(μ̂, base_variance) o Poisson(μ̂).
    """

    cfg: object

    def train(self, draw):
        return fit_cov(draw, self.cfg)

    def regenerate(self, draw, rng):
        y = np.array(draw.table.y, dtype=float)
        mask = np.ones(len(y), dtype=bool) if self.cfg.synthetic_outcomes == "all" else draw.row_is_base
        if not mask.any():
            return y
        prelim = self.train(draw)
        mu = fitted_values(prelim, draw)[mask]
        if LinkFamily(self.cfg.family) is LinkFamily.POISSON_LOG:
            y[mask] = rng.poisson(mu)
        else:
            y[mask] = mu + np.sqrt(self.cfg.base_variance) * rng.standard_normal(mask.sum())
        return y


# ----------------------------------------------------------------------------
# Posterior (Algoritmo de muestreo por draws independientes)
# ----------------------------------------------------------------------------
def _posterior_draw(data, cfg, s):
    rng = RngStream(cfg.seed, s).generator()
    try:
        if cfg.resampler == "bb":
            draw = draw_bb(data, rng, equal_weights=cfg.bb_equal_weights)
        else:
            gen = SyntheticOutcomeGenerator(cfg)
            draw = draw_dp(data, cfg.alpha, cfg.j_target, gen, rng, cfg.epsilon)
        fit = fit_dose_response(draw, cfg)
        apo = np.array([apo_at(fit, d, draw) for d in cfg.dose_grid])
    except (EstimationError, np.linalg.LinAlgError) as exc:
        return s, None, f"{type(exc).__name__}: {exc}"
    if not np.all(np.isfinite(apo)):
        return s, None, "APO no finito"
    return s, apo, None


def posterior_apo(data, cfg, n_jobs=1):
    """S draws con RngStream(seed, s); resultados ensamblados por s, sin depender de n_jobs."""
    grid = np.asarray(cfg.dose_grid, dtype=float)
    results = Parallel(n_jobs=n_jobs)(
        delayed(_posterior_draw)(data, cfg, s) for s in range(1, cfg.n_draws + 1)
    )
    results.sort(key=lambda r: r[0])

    ok = [(s, apo) for s, apo, _ in results if apo is not None]
    failures = tuple(DrawFailure(s, cause) for s, apo, cause in results if apo is None)
    for f in failures:
        logger.warning("Draw %d descartado: %s", f.draw, f.cause)
    if not ok or len(failures) > cfg.max_failure_rate * cfg.n_draws:
        raise ExcessFailureError(failures, cfg.n_draws, cfg.max_failure_rate)

    logger.info(
        "Posterior %s-%s: %d draws válidos, %d descartados",
        cfg.method.upper(), cfg.resampler.upper(), len(ok), len(failures),
    )
    return ApoPosterior(
        samples=np.vstack([apo for _, apo in ok]),
        dose_grid=grid,
        method=cfg.method,
        resampler=cfg.resampler,
        draw_ids=np.array([s for s, _ in ok]),
        failures=failures,
    )


def summarize(apo):
    """
    Media, varianza (denominador S−1), mediana y cuantiles 2.5%/97.5% por dosis.
    Los cuantiles usan interpolación lineal entre estadísticos de orden.
    """
    samples = np.asarray(apo.samples, dtype=float)
    if samples.shape[0] < 2:
        raise ValueError("Se requieren al menos 2 muestras para resumir el posterior")
    return pd.DataFrame(
        {
            "dose": np.asarray(apo.dose_grid, dtype=float),
            "mean": samples.mean(axis=0),
            "var": samples.var(axis=0, ddof=1),
            "median": np.median(samples, axis=0),
            "q025": np.quantile(samples, 0.025, axis=0, method="linear"),
            "q975": np.quantile(samples, 0.975, axis=0, method="linear"),
        }
    )


class DoseResponseEngine:
    def __init__(self, cfg, n_jobs=1):
        self.cfg = cfg
        self.n_jobs = n_jobs

    def ejecutar(self, data):
        logger.info(
            "Iniciando posterior %s-%s: %d unidades, %d filas, S=%d",
            self.cfg.method.upper(), self.cfg.resampler.upper(), data.n_units, data.n_rows, self.cfg.n_draws,
        )
        return posterior_apo(data, self.cfg, self.n_jobs)
