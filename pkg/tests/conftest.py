import numpy as np
import pytest

from modules.config import EstimatorConfig
from modules.gee import LinkFamily
from modules.panel import PanelDataset, Trajectory, TransformKind, apply_transform
from modules.resample import RngStream
from modules.simulation import DgpSpec, generate_example1, generate_example2


def make_panel(rng, n=30, k=5, family=LinkFamily.GAUSSIAN_IDENTITY):
    """d = 1 + 0.5·x1 − 0.3·x2 + ruido; y lineal (o log-lineal) en d y x."""
    trajs = []
    for i in range(n):
        X = rng.normal(size=(k, 2))
        d = 1.0 + X @ np.array([0.5, -0.3]) + rng.normal(scale=0.5, size=k)
        if family is LinkFamily.POISSON_LOG:
            y = rng.poisson(np.exp(0.5 + 0.3 * d + 0.2 * X[:, 0])).astype(float)
        else:
            y = 2.0 + d + X @ np.array([1.0, 0.5]) + rng.normal(size=k)
        trajs.append(Trajectory(f"u{i}", np.arange(1, k + 1), y, d, X))
    return PanelDataset(tuple(trajs), family, ("x1", "x2"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_panel(rng):
    return make_panel(rng)


@pytest.fixture
def poisson_panel(rng):
    return make_panel(rng, n=40, family=LinkFamily.POISSON_LOG)


@pytest.fixture
def example1_log():
    spec = DgpSpec(example="one", n=40, K=5, seed=3)
    return apply_transform(generate_example1(spec, RngStream(3)), "outcome", TransformKind.LOG)


@pytest.fixture
def example2_small():
    spec = DgpSpec(example="two", n=40, K=5, seed=4)
    return generate_example2(spec, RngStream(4))


@pytest.fixture
def quick_cfg():
    return EstimatorConfig(n_draws=8, j_target=60, alpha=5.0, seed=11)
