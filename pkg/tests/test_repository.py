import json
import logging

import numpy as np
import pytest

from modules.config import PanelSchema, RunConfig
from modules.engine import posterior_apo, summarize
from modules.errors import (
    ConfigError,
    IntegrityError,
    PanelParseError,
    PanelValidationError,
    SchemaError,
)
from modules.repository import (
    PanelRepository,
    ensure_sample_panel,
    load_panel_for_run,
    load_run_config,
    parse_panel_csv,
    sample_run_config,
    write_json,
    write_panel_csv,
)
from modules.resample import RngStream
from modules.simulation import generate_metro_panel

SCHEMA = PanelSchema(covariates=["x1", "x2"])
HEADER = "unit_id,time,outcome,dose,x1,x2\n"


def _write(tmp_path, body, header=HEADER, name="panel.csv"):
    path = tmp_path / name
    path.write_text(header + body, encoding="utf-8")
    return str(path)


def test_parse_groups_and_sorts(tmp_path):
    body = (
        "u1,3,1.5,2.0,0.1,0.2\n"
        "u1,1,1.0,2.1,0.3,0.4\n"
        "u2,1,0.5,1.0,0.5,0.6\n"
        "u1,2,1.2,2.2,0.7,0.8\n"
        "u2,2,0.7,1.1,0.9,1.0\n"
        "u2,3,0.9,1.2,1.1,1.2\n"
    )
    data = parse_panel_csv(_write(tmp_path, body), SCHEMA)
    assert data.n_units == 2
    assert data.n_covariates == 2
    assert [t.n_times for t in data.trajectories] == [3, 3]
    u1 = data.trajectories[0]
    assert list(u1.times) == [1, 2, 3]
    assert list(u1.outcomes) == [1.0, 1.2, 1.5]


def test_duplicate_row_is_integrity_error(tmp_path):
    body = "u1,1,1.0,2.0,0,0\nu1,2,1.0,2.0,0,0\nu1,2,3.0,2.0,0,0\n"
    with pytest.raises(IntegrityError) as info:
        parse_panel_csv(_write(tmp_path, body), SCHEMA)
    assert info.value.unit_id == "u1"
    assert info.value.time == 2


def test_na_outcome_is_parse_error_with_row(tmp_path):
    body = "u1,1,1.0,2.0,0,0\nu1,2,NA,2.0,0,0\n"
    with pytest.raises(PanelParseError) as info:
        parse_panel_csv(_write(tmp_path, body), SCHEMA)
    assert info.value.row == 3
    assert info.value.column == "outcome"


def test_missing_column_named(tmp_path):
    path = _write(tmp_path, "u1,1,1.0,2.0,0\n", header="unit_id,time,outcome,dose,x1\n")
    with pytest.raises(SchemaError) as info:
        parse_panel_csv(path, SCHEMA)
    assert info.value.column == "x2"


def test_extra_columns_ignored_with_warning(tmp_path, caplog):
    path = _write(tmp_path, "u1,1,1.0,2.0,0,0,z\n", header="unit_id,time,outcome,dose,x1,x2,nota\n")
    with caplog.at_level(logging.WARNING):
        data = parse_panel_csv(path, SCHEMA)
    assert data.n_rows == 1
    assert "nota" in caplog.text


def test_fractional_time_rejected(tmp_path):
    with pytest.raises(PanelParseError):
        parse_panel_csv(_write(tmp_path, "u1,1.5,1.0,2.0,0,0\n"), SCHEMA)


def test_write_then_parse_round_trip(tmp_path, small_panel):
    path = str(tmp_path / "round.csv")
    write_panel_csv(small_panel, path)
    back = parse_panel_csv(path, SCHEMA)
    assert np.array_equal(back.table.y, small_panel.table.y)
    assert np.array_equal(back.table.d, small_panel.table.d)
    assert np.array_equal(back.table.X, small_panel.table.X)


def test_load_run_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_run_config(str(tmp_path / "missing.json"))
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"version": 1, "unknown": True}), encoding="utf-8")
    with pytest.raises(ConfigError):
        load_run_config(str(bad))


def test_load_panel_for_run_resolves_grid(tmp_path, small_panel):
    path = str(tmp_path / "panel.csv")
    write_panel_csv(small_panel, path)
    cfg = RunConfig(data_schema=SCHEMA, dose_quantiles=[0.025, 0.5, 0.975])
    data, resolved = load_panel_for_run(path, cfg)
    expected = np.quantile(small_panel.table.d, [0.025, 0.5, 0.975])
    assert resolved.estimator.dose_grid == pytest.approx(list(expected))
    assert resolved.dose_quantiles is None
    assert data.n_rows == small_panel.n_rows


def test_poisson_family_rejects_negative_outcome(tmp_path):
    path = _write(tmp_path, "u1,1,-2,2.0,0,0\nu1,2,3,2.0,0,0\n")
    cfg = RunConfig(estimator={"family": "poisson_log"}, data_schema=SCHEMA)
    with pytest.raises(PanelValidationError):
        load_panel_for_run(path, cfg)


def test_transforms_applied_in_order(tmp_path):
    path = _write(tmp_path, "u1,1,0,1,0,0\nu1,2,3,2.718281828459045,0,0\n")
    cfg = RunConfig(
        data_schema=SCHEMA,
        transforms=[{"column": "dose", "kind": "log"}, {"column": "outcome", "kind": "log1p"}],
    )
    data, _ = load_panel_for_run(path, cfg)
    assert data.table.d == pytest.approx([0.0, 1.0])
    assert data.table.y == pytest.approx([0.0, np.log(4.0)])


def test_sample_panel_bootstrap(tmp_path):
    folder = str(tmp_path / "datos")
    repo = ensure_sample_panel(folder)
    data, cfg, path_panel, path_cfg = repo.cargar_datos()
    assert data.n_units == 8
    assert cfg.data_schema.dose == "ridership"
    assert cfg.dose_quantiles == [0.025, 0.5, 0.975]
    # Una segunda llamada no sobrescribe el panel
    before = open(path_panel, encoding="utf-8").read()
    ensure_sample_panel(folder)
    assert open(path_panel, encoding="utf-8").read() == before


def test_empty_repository(tmp_path):
    repo = PanelRepository(str(tmp_path / "vacio"))
    data, cfg, _, _ = repo.cargar_datos()
    assert data is None and cfg is None


def test_write_json_sorted(tmp_path):
    path = tmp_path / "out.json"
    write_json({"b": 1, "a": 2}, str(path))
    assert path.read_text(encoding="utf-8").index('"a"') < path.read_text(encoding="utf-8").index('"b"')


def _median_rise(tmp_path, dose_effect):
    cfg = sample_run_config()
    cfg = cfg.model_copy(update={"estimator": cfg.estimator.model_copy(update={"n_draws": 20, "seed": 4})})
    path = tmp_path / f"panel_{dose_effect}.csv"
    write_panel_csv(generate_metro_panel(dose_effect=dose_effect, rng=RngStream(31)), path, cfg.data_schema)
    data, resolved = load_panel_for_run(str(path), cfg)
    median = summarize(posterior_apo(data, resolved.estimator))["median"].to_numpy()
    return median[-1] - median[0]


def test_injected_dose_effect_raises_cov_median_curve(tmp_path):
    # Subida de la mediana entre los cuantiles 2.5% y 97.5% de la dosis
    assert _median_rise(tmp_path, 1.0) > _median_rise(tmp_path, 0.0) + 0.5
