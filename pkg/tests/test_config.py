import pytest
from pydantic import ValidationError

from modules.config import EstimatorConfig, RunConfig
from modules.gee import CorrelationKind, LinkFamily


def test_estimator_defaults():
    cfg = EstimatorConfig()
    assert cfg.method == "cov"
    assert cfg.resampler == "dp"
    assert cfg.alpha == 5.0
    assert cfg.j_target == 500
    assert cfg.family is LinkFamily.GAUSSIAN_IDENTITY
    assert cfg.corr is CorrelationKind.INDEPENDENT
    assert cfg.dose_grid == [3.0, 4.0, 5.0]


@pytest.mark.parametrize(
    "kwargs",
    [
        {"unknown": 1},
        {"alpha": 0},
        {"dose_grid": [3.0, 3.0]},
        {"dose_grid": []},
        {"weight_truncation": 40},
        {"method": "dr"},
    ],
)
def test_estimator_rejects(kwargs):
    with pytest.raises(ValidationError):
        EstimatorConfig(**kwargs)


def test_run_config_version_checked():
    with pytest.raises(ValidationError):
        RunConfig.model_validate({"version": 2})


def test_run_config_transform_column_known():
    with pytest.raises(ValidationError):
        RunConfig.model_validate({"transforms": [{"column": "deaths", "kind": "log1p"}]})
    cfg = RunConfig.model_validate(
        {"schema": {"covariates": ["deaths"]}, "transforms": [{"column": "deaths", "kind": "log1p"}]}
    )
    assert cfg.data_schema.covariates == ["deaths"]


def test_run_config_json_echo_is_explicit():
    dumped = RunConfig().to_json_dict()
    assert "schema" in dumped
    assert dumped["estimator"]["n_draws"] == 1000
    assert dumped["outputs"]["samples"] == "apo_samples.csv"
    assert RunConfig.model_validate(dumped) == RunConfig()


def test_quantiles_in_unit_interval():
    with pytest.raises(ValidationError):
        RunConfig(dose_quantiles=[0.5, 1.5])
