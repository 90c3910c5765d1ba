"""
MÓDULO: SIMULATION
Responsabilidad: Procesos generadores de datos de los dos ejemplos de simulación,
oráculos del APO verdadero, arnés de réplicas (Av Est / Av Est Var / cobertura) y
un panel sintético con el esquema de los datos de metros.
"""
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, List, Literal, Optional

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from pydantic import BaseModel, ConfigDict, Field

from modules.config import EstimatorConfig
from modules.engine import posterior_apo, summarize
from modules.errors import DoseResponseError, ReplicateFailedError
from modules.gee import LinkFamily
from modules.knowledge import (
    EJEMPLO1_DOSIS,
    EJEMPLO1_OUTCOME,
    EJEMPLO1_U,
    EJEMPLO1_X1,
    EJEMPLO1_X2,
    EJEMPLO2_OUTCOME,
    VALORES_REFERENCIA,
    CatalogoMetro,
)
from modules.panel import PanelDataset, Trajectory, TransformKind, apply_transform
from modules.resample import RngStream, as_generator, derive_seed

logger = logging.getLogger(__name__)

DRAWS_ORACULO = 10**7
BLOQUE_ORACULO = 10**6
SEMILLA_ORACULO = 20_220_123
MAX_REINTENTOS = 1000
TOLERANCIA_REFERENCIA = 0.01


class DgpSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    example: Literal["one", "two"] = "one"
    n: int = Field(100, ge=2, description="Unidades")
    K: int = Field(10, ge=1, description="Tiempos por unidad")
    seed: int = Field(0, ge=0, lt=2**64)
    second_param: Literal["variance", "sd"] = "variance"
    # Reemplaza coeficientes del outcome (gancho de prueba)
    outcome_coefficients: Optional[Dict[str, float]] = None


class SimulationConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    version: Literal[1] = 1
    dgp: DgpSpec = Field(default_factory=DgpSpec)
    estimator: EstimatorConfig = Field(default_factory=EstimatorConfig)
    replicates: int = Field(200, ge=2)

    def to_json_dict(self):
        return self.model_dump(mode="json")


@dataclass(frozen=True, eq=False)
class SimReport:
    frame: pd.DataFrame
    replicates: int
    draws: int
    reference: Optional[Dict] = None

    def to_csv(self, path):
        self.frame.to_csv(path, index=False, float_format="%.17g")


# ----------------------------------------------------------------------------
# Procesos generadores
# ----------------------------------------------------------------------------
def _scale(second, reading):
    return float(np.sqrt(second)) if reading == "variance" else float(second)


def _coefficients(defaults, spec):
    coefs = dict(defaults)
    if spec.outcome_coefficients:
        unknown = set(spec.outcome_coefficients) - set(coefs)
        if unknown:
            raise ValueError(f"Coeficientes desconocidos: {sorted(unknown)}")
        coefs.update(spec.outcome_coefficients)
    return coefs


def _confounders_and_dose(spec, g):
    """X1, X2 iid por (i,t); U por unidad; D = 1 + 4·X1 + 2·X2 + U + N(0,1)."""
    n, k, read = spec.n, spec.K, spec.second_param
    x1 = g.normal(EJEMPLO1_X1[0], _scale(EJEMPLO1_X1[1], read), size=(n, k))
    x2 = g.normal(EJEMPLO1_X2[0], _scale(EJEMPLO1_X2[1], read), size=(n, k))
    u = g.normal(EJEMPLO1_U[0], _scale(EJEMPLO1_U[1], read), size=n)
    c = EJEMPLO1_DOSIS
    d = (
        c["intercepto"] + c["x1"] * x1 + c["x2"] * x2 + c["u"] * u[:, None]
        + g.normal(0.0, _scale(c["ruido_var"], read), size=(n, k))
    )
    return x1, x2, u, d


def _as_panel(y, d, x1, x2, family):
    n, k = y.shape
    times = np.arange(1, k + 1)
    trajs = tuple(
        Trajectory(f"u{i:03d}", times, y[i], d[i], np.column_stack([x1[i], x2[i]]))
        for i in range(n)
    )
    return PanelDataset(trajs, family, ("x1", "x2"))


def generate_example1(spec, rng):
    """Y = N(20·exp(D + X1 − 0.25·X2 + 0.5·U), 1); los Y ≤ 0 se vuelven a sortear."""
    g = as_generator(rng)
    x1, x2, u, d = _confounders_and_dose(spec, g)
    c = _coefficients(EJEMPLO1_OUTCOME, spec)
    mean = c["escala"] * np.exp(c["d"] * d + c["x1"] * x1 + c["x2"] * x2 + c["u"] * u[:, None])
    sd = _scale(c["ruido_var"], spec.second_param)
    y = mean + sd * g.standard_normal(mean.shape)

    redraws = 0
    bad = y <= 0
    while bad.any():
        if redraws >= MAX_REINTENTOS:
            raise ValueError("Demasiados outcomes no positivos en el ejemplo 1")
        y[bad] = mean[bad] + sd * g.standard_normal(int(bad.sum()))
        redraws += 1
        bad = y <= 0
    if redraws:
        logger.warning("Ejemplo 1: outcomes no positivos resorteados en %d rondas", redraws)
    return _as_panel(y, d, x1, x2, LinkFamily.GAUSSIAN_IDENTITY)


def generate_example2(spec, rng):
    """Y ~ Poisson(exp(1 + 0.2·D + 0.005·X1/100 − 0.002·X2/100 + 0.1·U))."""
    g = as_generator(rng)
    x1, x2, u, d = _confounders_and_dose(spec, g)
    c = _coefficients(EJEMPLO2_OUTCOME, spec)
    rate = np.exp(c["intercepto"] + c["d"] * d + c["x1"] * x1 + c["x2"] * x2 + c["u"] * u[:, None])
    y = g.poisson(rate).astype(float)
    return _as_panel(y, d, x1, x2, LinkFamily.POISSON_LOG)


def generate(spec, rng):
    return generate_example1(spec, rng) if spec.example == "one" else generate_example2(spec, rng)


# ----------------------------------------------------------------------------
# Oráculos
# ----------------------------------------------------------------------------
def true_apo_example1(d):
    """APO en escala log: log(20) + d + E[X1] − 0.25·E[X2] + 0.5·E[U]."""
    c = EJEMPLO1_OUTCOME
    return float(
        np.log(c["escala"]) + c["d"] * d + c["x1"] * EJEMPLO1_X1[0]
        + c["x2"] * EJEMPLO1_X2[0] + c["u"] * EJEMPLO1_U[0]
    )


@lru_cache(maxsize=None)
def true_apo_example2(d, n_draws=DRAWS_ORACULO, second_param="variance"):
    """E[Y(d)] por Monte Carlo sobre (X1, X2, U), en bloques de 10^6 con semilla fija."""
    g = np.random.default_rng(SEMILLA_ORACULO)
    c = EJEMPLO2_OUTCOME
    total = 0.0
    remaining = int(n_draws)
    while remaining > 0:
        m = min(remaining, BLOQUE_ORACULO)
        x1 = g.normal(EJEMPLO1_X1[0], _scale(EJEMPLO1_X1[1], second_param), m)
        x2 = g.normal(EJEMPLO1_X2[0], _scale(EJEMPLO1_X2[1], second_param), m)
        u = g.normal(EJEMPLO1_U[0], _scale(EJEMPLO1_U[1], second_param), m)
        total += np.exp(c["intercepto"] + c["d"] * d + c["x1"] * x1 + c["x2"] * x2 + c["u"] * u).sum()
        remaining -= m
    return float(total / n_draws)


def true_apo(example, d, second_param="variance"):
    if example == "one":
        return true_apo_example1(d)
    return true_apo_example2(float(d), DRAWS_ORACULO, second_param)


# ----------------------------------------------------------------------------
# Réplicas
# ----------------------------------------------------------------------------
def _replicate_config(spec, cfg, r):
    family = LinkFamily.GAUSSIAN_IDENTITY if spec.example == "one" else LinkFamily.POISSON_LOG
    return cfg.model_copy(update={"seed": derive_seed(cfg.seed, r), "family": family})


def _replicate(spec, cfg, r):
    data = generate(spec, RngStream(spec.seed, r))
    if spec.example == "one":
        # El ejemplo 1 se analiza en escala log
        data = apply_transform(data, "outcome", TransformKind.LOG)
    try:
        apo = posterior_apo(data, _replicate_config(spec, cfg, r), n_jobs=1)
    except DoseResponseError as exc:
        raise ReplicateFailedError(r, exc) from exc
    logger.debug("Réplica %d terminada (%d draws válidos)", r, apo.samples.shape[0])
    return r, summarize(apo)


def _reference(spec, cfg, grid, truth):
    ref = VALORES_REFERENCIA.get(spec.example, {})
    key = f"{cfg.method}-{cfg.resampler}"
    verdad = ref.get("verdad", {})
    if key not in ref or any(float(d) not in verdad for d in grid):
        return None
    for d, t in zip(grid, truth):
        if abs(t - verdad[float(d)]) > TOLERANCIA_REFERENCIA:
            logger.warning(
                "Verdad calculada %.4f distinta del valor de referencia %.3f en dosis %g",
                t, verdad[float(d)], d,
            )
    return {"verdad": verdad, **ref[key]}


def run_replications(spec, cfg, R, n_jobs=1):
    """
    Para r = 1..R: datos con RngStream(spec.seed, r) y posterior con semilla
    derive_seed(cfg.seed, r). Agrega media de medias, media de varianzas y el
    porcentaje de réplicas cuyo intervalo 2.5%–97.5% contiene la verdad.
    """
    if R < 2:
        raise ValueError("Se requieren al menos 2 réplicas")
    grid = np.asarray(cfg.dose_grid, dtype=float)
    truth = np.array([true_apo(spec.example, d, spec.second_param) for d in grid])

    results = Parallel(n_jobs=n_jobs)(delayed(_replicate)(spec, cfg, r) for r in range(1, R + 1))
    results.sort(key=lambda item: item[0])
    summaries: List[pd.DataFrame] = [s for _, s in results]

    means = np.vstack([s["mean"].to_numpy() for s in summaries])
    variances = np.vstack([s["var"].to_numpy() for s in summaries])
    covered = np.vstack(
        [(s["q025"].to_numpy() <= truth) & (truth <= s["q975"].to_numpy()) for s in summaries]
    )
    frame = pd.DataFrame(
        {
            "method": cfg.method,
            "resampler": cfg.resampler,
            "dose": grid,
            "truth": truth,
            "av_est": means.mean(axis=0),
            "av_est_var": variances.mean(axis=0),
            "coverage_pct": 100.0 * covered.mean(axis=0),
            "R": R,
            "S": cfg.n_draws,
        }
    )
    logger.info(
        "Simulación ejemplo %s %s-%s: %d réplicas, S=%d",
        spec.example, cfg.method.upper(), cfg.resampler.upper(), R, cfg.n_draws,
    )
    return SimReport(frame, R, cfg.n_draws, _reference(spec, cfg, grid, truth))


# ----------------------------------------------------------------------------
# Panel sintético con esquema de metros
# ----------------------------------------------------------------------------
def generate_metro_panel(
    n_units=8, n_times=23, n_covariates=10, dose_effect=0.5, rng=None, family=LinkFamily.GAUSSIAN_IDENTITY
):
    """
    Ridership crudo (positivo) y casos crudos (conteos) por ciudad y mes. El efecto
    de log(ridership) sobre log-tasa de casos es `dose_effect`. `deaths` es un conteo
    y `cases_lag1` es log(1 + casos del mes anterior).
    """
    g = as_generator(rng if rng is not None else RngStream(0))
    catalogo = CatalogoMetro()
    names = catalogo.nombres_confusores[:n_covariates]
    names += [f"x{j + 1}" for j in range(len(names), n_covariates)]
    p = len(names)

    beta_d = np.where(np.arange(p) < 3, 0.2, 0.0)
    beta_y = np.where(np.arange(p) < 3, 0.1, 0.0)
    city = g.normal(0.0, 0.5, size=n_units)

    trajs = []
    for i in range(n_units):
        X = g.normal(0.0, 1.0, size=(n_times, p))
        log_ride = np.empty(n_times)
        cases = np.empty(n_times)
        lag = 4.0
        for t in range(n_times):
            if "cases_lag1" in names:
                X[t, names.index("cases_lag1")] = lag
            if "deaths" in names:
                X[t, names.index("deaths")] = g.poisson(np.exp(1.0 + 0.1 * lag))
            z = X[t].copy()
            z[[j for j, nm in enumerate(names) if nm in ("deaths", "cases_lag1")]] = 0.0
            log_ride[t] = 11.0 + city[i] + z @ beta_d + g.normal(0.0, 0.3)
            rate = 4.0 + dose_effect * (log_ride[t] - 11.0) + z @ beta_y + 0.5 * city[i]
            cases[t] = g.poisson(np.exp(rate))
            lag = float(np.log1p(cases[t]))
        trajs.append(
            Trajectory(f"metro_{i + 1:02d}", np.arange(1, n_times + 1), cases, np.exp(log_ride), X)
        )
    return PanelDataset(tuple(trajs), family, tuple(names))
