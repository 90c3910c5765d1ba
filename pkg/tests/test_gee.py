import numpy as np
import pytest
from scipy.optimize import root

from modules.errors import DivergenceError, SingularDesignError
from modules.gee import (
    GeeDesign,
    LinkFamily,
    WorkingCorrelation,
    estimating_equation,
    fit_gee,
    predict_mean,
)

GAUSS = LinkFamily.GAUSSIAN_IDENTITY
POIS = LinkFamily.POISSON_LOG
IND = WorkingCorrelation.independent()


def _design(rng, n=60, p=3, groups=None):
    X = np.column_stack([np.ones(n), rng.normal(size=(n, p - 1))])
    y = X @ rng.normal(size=p) + rng.normal(size=n)
    g = np.repeat(np.arange(n // 3), 3) if groups is None else groups
    return GeeDesign(y, X, g)


def test_gaussian_matches_weighted_least_squares(rng):
    for _ in range(100):
        design = _design(rng)
        w = rng.uniform(0.1, 3.0, design.n_rows)
        fit = fit_gee(design, GAUSS, IND, w)
        sw = np.sqrt(w)
        expected, *_ = np.linalg.lstsq(design.X * sw[:, None], design.y * sw, rcond=None)
        assert np.allclose(fit.xi, expected, atol=1e-8)
        assert fit.converged


def test_poisson_matches_newton_oracle(rng):
    for _ in range(20):
        n = 50
        X = np.column_stack([np.ones(n), rng.normal(scale=0.5, size=n)])
        y = rng.poisson(np.exp(X @ np.array([0.5, 0.3]))).astype(float)
        w = rng.uniform(0.5, 2.0, n)
        design = GeeDesign(y, X, np.arange(n))
        fit = fit_gee(design, POIS, IND, w)

        def score(b):
            return X.T @ (w * (y - np.exp(X @ b)))

        def jac(b):
            return -(X * (w * np.exp(X @ b))[:, None]).T @ X

        oracle = root(score, np.zeros(2), jac=jac, tol=1e-12)
        assert oracle.success
        assert np.allclose(fit.xi, oracle.x, atol=1e-6)
        assert fit.ee_norm < 1e-8


def test_weight_scale_invariance(rng):
    design = _design(rng)
    w = rng.uniform(0.1, 3.0, design.n_rows)
    a = fit_gee(design, GAUSS, WorkingCorrelation.exchangeable(), w)
    b = fit_gee(design, GAUSS, WorkingCorrelation.exchangeable(), 7.3 * w)
    assert np.allclose(a.xi, b.xi, atol=1e-10)


def test_zero_weights_drop_rows(rng):
    design = _design(rng)
    w = rng.uniform(0.5, 2.0, design.n_rows)
    w[:10] = 0.0
    full = fit_gee(design, GAUSS, IND, w)
    keep = w > 0
    sub = fit_gee(design.subset(keep), GAUSS, IND, w[keep])
    assert np.allclose(full.xi, sub.xi, atol=1e-10)


def test_singular_design_raises(rng):
    design = _design(rng, p=2)
    X = np.column_stack([design.X, design.X[:, 1]])
    with pytest.raises(SingularDesignError):
        fit_gee(GeeDesign(design.y, X, design.groups), GAUSS, IND, np.ones(design.n_rows))


def test_poisson_separation_diverges():
    x = np.array([-1.0] * 3 + [1.0] * 3)
    y = np.array([0.0] * 3 + [5.0] * 3)
    design = GeeDesign(y, np.column_stack([np.ones(6), x]), np.arange(6))
    with pytest.raises(DivergenceError):
        fit_gee(design, POIS, IND, np.ones(6))


def test_exchangeable_with_zero_rho_equals_independent(rng):
    design = _design(rng)
    w = np.ones(design.n_rows)
    a = fit_gee(design, GAUSS, IND, w)
    b = fit_gee(design, GAUSS, WorkingCorrelation.exchangeable(0.0), w)
    assert np.allclose(a.xi, b.xi, atol=1e-10)


def test_exchangeable_rho_detects_cluster_effect(rng):
    n_units, k = 200, 5
    groups = np.repeat(np.arange(n_units), k)
    X = np.column_stack([np.ones(n_units * k), rng.normal(size=n_units * k)])
    y = X @ np.array([1.0, 2.0]) + np.repeat(rng.normal(size=n_units), k) + rng.normal(size=n_units * k)
    fit = fit_gee(GeeDesign(y, X, groups), GAUSS, WorkingCorrelation.exchangeable(), np.ones(len(y)))
    assert 0.3 < fit.rho < 0.7
    assert fit.xi == pytest.approx([1.0, 2.0], abs=0.2)


def test_estimating_equation_vanishes_at_solution(rng):
    design = _design(rng)
    w = rng.uniform(0.5, 2.0, design.n_rows)
    fit = fit_gee(design, GAUSS, IND, w)
    U = estimating_equation(fit.xi, design, GAUSS, IND, w / w.sum())
    assert np.max(np.abs(U)) < 1e-8
    assert fit.ee_norm == pytest.approx(np.max(np.abs(U)), abs=1e-12)


def test_predict_mean_applies_inverse_link():
    design = GeeDesign(np.array([1.0, 2.0, 4.0]), np.ones((3, 1)), np.arange(3))
    fit = fit_gee(design, POIS, IND, np.ones(3))
    assert predict_mean(fit, np.array([1.0])) == pytest.approx(7.0 / 3.0, rel=1e-8)
    with pytest.raises(ValueError):
        predict_mean(fit, np.array([1.0, 2.0]))


def test_independent_rejects_rho():
    with pytest.raises(ValueError):
        WorkingCorrelation("independent", 0.3)
