import numpy as np
import pandas as pd
import pytest

from modules import engine
from modules.config import EstimatorConfig
from modules.engine import (
    ApoPosterior,
    DoseResponseEngine,
    SyntheticOutcomeGenerator,
    apo_at,
    fit_cov,
    fit_wor,
    posterior_apo,
    summarize,
)
from modules.errors import ExcessFailureError, SingularDesignError
from modules.gee import LinkFamily
from modules.panel import PanelDataset, Trajectory, TransformKind, apply_transform
from modules.resample import RngStream, draw_bb, draw_dp
from modules.simulation import DgpSpec, generate_example1, true_apo_example1

GRID = [0.5, 1.0, 1.5]


def _cfg(**kw):
    base = dict(n_draws=6, j_target=60, seed=11, dose_grid=GRID, resampler="bb")
    base.update(kw)
    return EstimatorConfig(**base)


def _affine(data, a, b):
    trajs = tuple(
        Trajectory(t.unit_id, t.times, a * t.outcomes + b, t.doses, t.covariates) for t in data.trajectories
    )
    return PanelDataset(trajs, data.family, data.covariate_names)


@pytest.mark.parametrize("method", ["cov", "wor"])
def test_equal_weights_give_identical_draws(small_panel, method):
    apo = posterior_apo(small_panel, _cfg(method=method, bb_equal_weights=True))
    assert apo.samples.shape == (6, 3)
    assert np.allclose(apo.samples, apo.samples[0])


@pytest.mark.parametrize("method", ["cov", "wor"])
def test_gaussian_affine_equivariance(small_panel, method):
    cfg = _cfg(method=method)
    base = posterior_apo(small_panel, cfg)
    shifted = posterior_apo(_affine(small_panel, 2.5, -1.0), cfg)
    assert np.allclose(shifted.samples, 2.5 * base.samples - 1.0, atol=1e-8)


def test_parallel_matches_serial(small_panel):
    cfg = _cfg(resampler="dp")
    serial = posterior_apo(small_panel, cfg, n_jobs=1)
    parallel = posterior_apo(small_panel, cfg, n_jobs=2)
    np.testing.assert_allclose(parallel.samples, serial.samples, rtol=1e-12, atol=0)
    assert np.array_equal(serial.draw_ids, parallel.draw_ids)


def test_wor_apo_follows_outcome_model(small_panel):
    draw = draw_bb(small_panel, RngStream(1, 1))
    fit = fit_wor(draw, _cfg(method="wor"))
    B = fit.spline.design_matrix([1.0])[0, 1:]
    expected = fit.outcome_fit.xi[0] + B @ fit.outcome_fit.xi[1:]
    assert apo_at(fit, 1.0) == pytest.approx(expected)


def test_cov_apo_requires_draw(small_panel):
    draw = draw_bb(small_panel, RngStream(1, 1))
    fit = fit_cov(draw, _cfg())
    assert np.isfinite(apo_at(fit, 1.0, draw))
    with pytest.raises(ValueError):
        apo_at(fit, 1.0)


def test_cov_outcome_covariates_widen_design(small_panel):
    draw = draw_bb(small_panel, RngStream(1, 1))
    plain = fit_cov(draw, _cfg())
    wide = fit_cov(draw, _cfg(outcome_covariates=True))
    assert len(wide.outcome_fit.xi) == len(plain.outcome_fit.xi) + small_panel.n_covariates


def test_cov_recovers_example1_truth():
    spec = DgpSpec(example="one", n=100, K=10, seed=21)
    data = apply_transform(generate_example1(spec, RngStream(21)), "outcome", TransformKind.LOG)
    apo = posterior_apo(data, EstimatorConfig(n_draws=30, resampler="bb", seed=5))
    means = apo.samples.mean(axis=0)
    assert means[1] == pytest.approx(true_apo_example1(4.0), abs=0.3)


def test_poisson_family_runs(example2_small):
    cfg = EstimatorConfig(n_draws=5, resampler="bb", family=LinkFamily.POISSON_LOG, seed=2)
    apo = posterior_apo(example2_small, cfg)
    assert np.all(apo.samples > 0)


@pytest.mark.parametrize("mode", ["mixture", "all"])
def test_dp_with_synthetic_outcomes(example1_log, mode):
    cfg = EstimatorConfig(n_draws=4, resampler="dp", j_target=60, synthetic_outcomes=mode, seed=3)
    apo = posterior_apo(example1_log, cfg)
    assert apo.samples.shape == (4, 3)
    assert np.all(np.isfinite(apo.samples))


def test_generator_keeps_empirical_rows(example1_log):
    cfg = EstimatorConfig(j_target=60)
    draw = draw_dp(example1_log, 5.0, 200, None, RngStream(8, 1))
    y = SyntheticOutcomeGenerator(cfg).regenerate(draw, np.random.default_rng(0))
    base = draw.row_is_base
    assert np.array_equal(y[~base], draw.table.y[~base])
    assert not np.array_equal(y[base], draw.table.y[base])


def test_excess_failures_abort():
    trajs = tuple(Trajectory(f"u{i}", [1], [float(i)], [float(i)], np.zeros((1, 1))) for i in range(3))
    data = PanelDataset(trajs, covariate_names=("x1",))
    with pytest.raises(ExcessFailureError) as info:
        posterior_apo(data, _cfg(n_draws=4))
    assert len(info.value.failures) == 4


def test_summarize_known_samples():
    samples = np.column_stack([np.arange(1.0, 6.0), np.full(5, 2.0)])
    apo = ApoPosterior(samples, np.array([1.0, 2.0]), "cov", "bb", np.arange(1, 6))
    summary = summarize(apo)
    first = summary.iloc[0]
    assert list(summary.columns) == ["dose", "mean", "var", "median", "q025", "q975"]
    assert first["mean"] == pytest.approx(3.0)
    assert first["var"] == pytest.approx(2.5)
    assert first["median"] == pytest.approx(3.0)
    assert first["q025"] == pytest.approx(1.1)
    assert first["q975"] == pytest.approx(4.9)
    assert summary.iloc[1]["var"] == 0.0


def test_summarize_needs_two_samples():
    apo = ApoPosterior(np.ones((1, 2)), np.array([1.0, 2.0]), "cov", "bb", np.array([1]))
    with pytest.raises(ValueError):
        summarize(apo)


def test_long_frame_round_trip():
    samples = np.arange(6.0).reshape(3, 2)
    apo = ApoPosterior(samples, np.array([3.0, 4.0]), "cov", "dp", np.array([1, 2, 4]))
    frame = apo.to_long_frame()
    assert list(frame.columns) == ["draw", "dose", "apo"]
    back = ApoPosterior.from_long_frame(frame)
    assert np.array_equal(back.samples, samples)
    assert np.array_equal(back.dose_grid, [3.0, 4.0])
    pd.testing.assert_frame_equal(summarize(back), summarize(apo))


def test_engine_wrapper(small_panel):
    apo = DoseResponseEngine(_cfg(), n_jobs=1).ejecutar(small_panel)
    assert np.array_equal(apo.dose_grid, GRID)
    assert apo.n_draws == 6


def _unconfounded_panel(rng, n=60, k=5):
    trajs = []
    for i in range(n):
        X = rng.normal(size=(k, 2))
        d = 1.0 + rng.normal(size=k)
        y = 1.0 + d + X @ np.array([1.0, 0.5]) + rng.normal(size=k)
        trajs.append(Trajectory(f"u{i}", np.arange(1, k + 1), y, d, X))
    return PanelDataset(tuple(trajs), LinkFamily.GAUSSIAN_IDENTITY, ("x1", "x2"))


def test_wor_and_cov_agree_without_confounding(rng):
    data = _unconfounded_panel(rng)
    cov = posterior_apo(data, _cfg(method="cov", n_draws=30))
    wor = posterior_apo(data, _cfg(method="wor", n_draws=30))
    gap = np.abs(cov.samples.mean(axis=0) - wor.samples.mean(axis=0))
    sd = np.maximum(cov.samples.std(axis=0, ddof=1), wor.samples.std(axis=0, ddof=1))
    assert np.all(gap <= 2 * sd)


class TestFailedDraws:
    def _failing_every_other(self, monkeypatch):
        original = engine.fit_dose_response
        calls = {"n": 0}

        def flaky(draw, cfg):
            calls["n"] += 1
            if calls["n"] % 2 == 0:
                raise SingularDesignError("diseño degenerado forzado")
            return original(draw, cfg)

        monkeypatch.setattr(engine, "fit_dose_response", flaky)

    def test_skipped_plus_kept_equals_draws(self, small_panel, monkeypatch):
        clean = posterior_apo(small_panel, _cfg())
        self._failing_every_other(monkeypatch)
        apo = posterior_apo(small_panel, _cfg(max_failure_rate=0.6), n_jobs=1)
        assert [f.draw for f in apo.failures] == [2, 4, 6]
        assert list(apo.draw_ids) == [1, 3, 5]
        assert apo.samples.shape[0] + len(apo.failures) == 6
        assert apo.n_draws == 6
        assert all("SingularDesignError" in f.cause for f in apo.failures)
        # Los draws sobrevivientes no dependen de las fallas de los otros
        np.testing.assert_array_equal(apo.samples, clean.samples[[0, 2, 4]])

    def test_partial_failures_above_rate_abort(self, small_panel, monkeypatch):
        self._failing_every_other(monkeypatch)
        with pytest.raises(ExcessFailureError) as info:
            posterior_apo(small_panel, _cfg(), n_jobs=1)
        assert len(info.value.failures) == 3
