"""
MÓDULO: REPOSITORY
Responsabilidad: Gestión de persistencia y acceso a datos (CSV/JSON).
Lee y escribe paneles longitudinales, configuraciones de corrida y salidas del posterior.
"""
import json
import logging
import os

import numpy as np
import pandas as pd
from pydantic import ValidationError

from modules.config import PanelSchema, RunConfig, TransformSpec
from modules.engine import ApoPosterior, summarize
from modules.errors import ConfigError, IntegrityError, PanelParseError, SamplesFormatError, SchemaError
from modules.gee import LinkFamily
from modules.knowledge import CUANTILES_DOSIS_APLICACION, CatalogoMetro
from modules.panel import PanelDataset, Trajectory, TransformKind, apply_transform
from modules.simulation import generate_metro_panel

logger = logging.getLogger(__name__)

FORMATO_NUMERO = "%.17g"


def _numeric_column(frame, column, integer=False):
    raw = frame[column].str.strip()
    values = pd.to_numeric(raw, errors="coerce").to_numpy(dtype=float)
    bad = ~np.isfinite(values)
    if integer:
        bad |= np.isfinite(values) & (values != np.round(values))
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        # Fila 1 es el encabezado
        raise PanelParseError(i + 2, column, frame[column].iloc[i])
    return values


def parse_panel_csv(path, schema=None, family=LinkFamily.GAUSSIAN_IDENTITY):
    """CSV UTF-8 con encabezado, una fila por (unidad, tiempo). Columnas extra se ignoran."""
    schema = schema or PanelSchema()
    frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    required = [schema.unit_id, schema.time, schema.outcome, schema.dose, *schema.covariates]
    for column in required:
        if column not in frame.columns:
            raise SchemaError(column)
    extra = [c for c in frame.columns if c not in required]
    if extra:
        logger.warning("Columnas ignoradas en %s: %s", path, ", ".join(extra))

    ids = frame[schema.unit_id].to_numpy(dtype=object)
    times = _numeric_column(frame, schema.time, integer=True).astype(np.int64)
    y = _numeric_column(frame, schema.outcome)
    d = _numeric_column(frame, schema.dose)
    X = (
        np.column_stack([_numeric_column(frame, c) for c in schema.covariates])
        if schema.covariates
        else np.zeros((len(frame), 0))
    )

    keys = pd.DataFrame({"unit": ids, "time": times})
    dup = keys.duplicated()
    if dup.any():
        i = int(np.flatnonzero(dup.to_numpy())[0])
        raise IntegrityError(ids[i], int(times[i]))

    trajs = []
    for unit in pd.unique(ids):
        rows = np.flatnonzero(ids == unit)
        rows = rows[np.argsort(times[rows], kind="stable")]
        trajs.append(Trajectory(str(unit), times[rows], y[rows], d[rows], X[rows]))

    data = PanelDataset(tuple(trajs), family, tuple(schema.covariates))
    logger.info("Panel cargado desde %s: %d unidades, %d filas", path, data.n_units, data.n_rows)
    return data


def write_panel_csv(data, path, schema=None):
    schema = schema or PanelSchema(covariates=list(data.covariate_names))
    rows = {
        schema.unit_id: np.concatenate([[t.unit_id] * t.n_times for t in data.trajectories]),
        schema.time: np.concatenate([t.times for t in data.trajectories]),
        schema.outcome: data.table.y,
        schema.dose: data.table.d,
    }
    for j, name in enumerate(schema.covariates):
        rows[name] = data.table.X[:, j]
    pd.DataFrame(rows).to_csv(path, index=False, float_format=FORMATO_NUMERO)


def load_model_config(path, model):
    """JSON validado contra un modelo pydantic; cualquier falla se reporta como ConfigError."""
    if not os.path.exists(path):
        raise ConfigError(f"No existe el archivo de configuración: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            return model.model_validate(json.load(f))
    except (json.JSONDecodeError, ValidationError) as exc:
        raise ConfigError(f"Configuración inválida en {path}: {exc}") from exc


def load_run_config(path):
    return load_model_config(path, RunConfig)


def load_panel_for_run(path, cfg):
    """
    Lee el panel con el esquema de `cfg`, aplica las transformaciones en orden y
    valida la familia del estimador sobre los datos transformados. Devuelve
    (panel, cfg resuelto) donde la grilla de dosis queda explícita.
    """
    data = parse_panel_csv(path, cfg.data_schema, LinkFamily.GAUSSIAN_IDENTITY)
    for spec in cfg.transforms:
        data = apply_transform(data, spec.column, spec.kind)
    data = PanelDataset(data.trajectories, cfg.estimator.family, data.covariate_names)
    return data, resolve_dose_grid(data, cfg)


def resolve_dose_grid(data, cfg):
    if cfg.dose_quantiles is None:
        return cfg
    grid = np.quantile(data.table.d, sorted(cfg.dose_quantiles))
    if np.any(np.diff(grid) <= 0):
        raise ConfigError(f"Los cuantiles de dosis {cfg.dose_quantiles} no dan una grilla creciente: {grid}")
    estimator = cfg.estimator.model_copy(update={"dose_grid": [float(v) for v in grid]})
    logger.info("Grilla de dosis resuelta desde cuantiles: %s", ", ".join(f"{v:.4g}" for v in grid))
    return cfg.model_copy(update={"estimator": estimator, "dose_quantiles": None})


def write_json(payload, path):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True, ensure_ascii=False)
        f.write("\n")


def sample_run_config(n_covariates=10):
    """Configuración del análisis de aplicación: log-dosis, outcome y muertes en log(x+1)."""
    catalogo = CatalogoMetro()
    covariates = catalogo.nombres_confusores[:n_covariates]
    transforms = [
        TransformSpec(column="dose", kind=TransformKind.LOG),
        TransformSpec(column="outcome", kind=TransformKind.LOG1P),
    ]
    if "deaths" in covariates:
        transforms.append(TransformSpec(column="deaths", kind=TransformKind(catalogo.get_transformacion("deaths"))))
    return RunConfig(
        estimator={"method": "cov", "resampler": "dp", "n_draws": 200, "j_target": 200, "outcome_covariates": True},
        data_schema=PanelSchema(
            unit_id="metro", time="month", outcome="cases", dose="ridership", covariates=covariates
        ),
        transforms=transforms,
        dose_quantiles=list(CUANTILES_DOSIS_APLICACION),
    )


class PanelRepository:
    """Carpeta de trabajo con el panel y su configuración de corrida."""

    def __init__(self, data_folder="datos_panel"):
        self.folder_path = data_folder
        self._inicializar_estructura()

    def _inicializar_estructura(self):
        """Crea la carpeta si no existe."""
        if not os.path.exists(self.folder_path):
            os.makedirs(self.folder_path)

    def get_rutas(self):
        return (
            os.path.join(self.folder_path, "panel.csv"),
            os.path.join(self.folder_path, "run.json"),
        )

    def cargar_datos(self, family=None):
        """Devuelve (panel, config, ruta_panel, ruta_config); None donde falten archivos."""
        path_panel, path_cfg = self.get_rutas()
        cfg = load_run_config(path_cfg) if os.path.exists(path_cfg) else None
        data = None
        if os.path.exists(path_panel):
            schema = cfg.data_schema if cfg is not None else None
            data = parse_panel_csv(path_panel, schema, family or LinkFamily.GAUSSIAN_IDENTITY)
        return data, cfg, path_panel, path_cfg


def ensure_sample_panel(folder="datos_panel", rng=None):
    """Si la carpeta no tiene panel, escribe uno sintético con esquema de metros y su run.json."""
    repo = PanelRepository(folder)
    path_panel, path_cfg = repo.get_rutas()
    if not os.path.exists(path_panel):
        cfg = sample_run_config()
        data = generate_metro_panel(rng=rng)
        write_panel_csv(data, path_panel, cfg.data_schema)
        write_json(cfg.to_json_dict(), path_cfg)
        logger.info("Panel de ejemplo creado en %s", path_panel)
    return repo


def write_apo_outputs(apo, samples_path, summary_path):
    apo.to_long_frame().to_csv(samples_path, index=False, float_format=FORMATO_NUMERO)
    summarize(apo).to_csv(summary_path, index=False, float_format=FORMATO_NUMERO)


def read_apo_samples(path):
    """Muestras (draw, dose, apo) en formato largo → ApoPosterior."""
    if not os.path.exists(path):
        raise SamplesFormatError(f"No existe el archivo de muestras: {path}")
    try:
        frame = pd.read_csv(path)
        return ApoPosterior.from_long_frame(frame)
    except (ValueError, KeyError) as exc:
        raise SamplesFormatError(f"Archivo de muestras inválido {path}: {exc}") from exc
