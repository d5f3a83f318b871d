import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bayesfblin.errors import InvalidObservation
from bayesfblin.kernels import KernelSpec
from bayesfblin.lognormal import LogNormalModel, lognormal_mean, lognormal_variance

K = KernelSpec.se([1.0, 1.0], 1.0)


def test_observe_one_gives_zero_log_mean():
    m = LogNormalModel.empty(K, log_noise=0.0).observe([0.0, 0.0], 1.0)
    mu, s2 = m.log_posterior([0.0, 0.0])
    assert mu == pytest.approx(0.0, abs=1e-12)
    assert m.linear_mean([0.0, 0.0]) == pytest.approx(1.0, abs=1e-6)


def test_observe_stores_log_target():
    m = LogNormalModel.empty(K).observe([0.0, 0.0], 2.0)
    assert m.log_gp.y[0] == pytest.approx(0.693147, abs=1e-6)


def test_delta_mode_noise():
    m = LogNormalModel.empty(K, noise_mode="delta")
    assert m.observation_noise(2.0, 0.4) == pytest.approx(0.1)
    assert m.observe([0.0, 0.0], 2.0, 0.4).log_gp.noise[0] == pytest.approx(0.1)


def test_delta_mode_floor():
    m = LogNormalModel.empty(K, noise_mode="delta", log_noise_floor=1e-3)
    assert m.observation_noise(10.0, 0.0) == 1e-3


def test_fixed_mode_ignores_linear_variance():
    assert LogNormalModel.empty(K, log_noise=0.1).observation_noise(2.0, 5.0) == 0.1


@pytest.mark.parametrize("b", [0.0, -1.5])
def test_nonpositive_b_rejected(b):
    with pytest.raises(InvalidObservation):
        LogNormalModel.empty(K).observe([0.0, 0.0], b)


def test_empty_model_mean_from_prior_variance():
    m = LogNormalModel.empty(KernelSpec.se([1.0, 1.0], 0.1))
    assert m.linear_mean([0.3, 0.3]) == pytest.approx(1.005013, abs=1e-6)


def test_mean_formula():
    assert lognormal_mean(0.0, 2.0) == pytest.approx(math.e, abs=1e-6)


def test_variance_formula():
    assert lognormal_variance(0.0, 0.0) == 0.0
    assert lognormal_variance(0.0, 1.0) == pytest.approx(4.670774, abs=1e-6)


def test_monte_carlo_moments():
    rng = np.random.default_rng(20240501)
    mu, s2 = 0.3, 0.5
    b = np.exp(rng.normal(mu, math.sqrt(s2), 1_000_000))
    assert abs(b.mean() / lognormal_mean(mu, s2) - 1) < 0.01
    assert abs(b.var() / lognormal_variance(mu, s2) - 1) < 0.02


@given(st.floats(-5, 5), st.floats(0, 5), st.floats(1e-3, 3))
def test_mean_increases_with_log_variance(mu, s2, ds):
    assert lognormal_mean(mu, s2 + ds) > lognormal_mean(mu, s2)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.integers(0, 6))
def test_positivity_on_random_data(seed, n):
    rng = np.random.default_rng(seed)
    m = LogNormalModel.empty(K, log_noise=rng.uniform(1e-4, 0.5))
    for _ in range(n):
        m = m.observe(rng.uniform(-2, 2, 2), math.exp(rng.normal(0, 2)))
    for q in rng.uniform(-4, 4, (8, 2)):
        assert m.linear_mean(q) > 0
        assert m.linear_variance(q) >= 0


def test_consistency_at_noise_free_input():
    m = LogNormalModel.empty(K, log_noise=0.0).observe([0.5, -0.5], 3.7)
    assert m.linear_mean([0.5, -0.5]) == pytest.approx(3.7, abs=1e-6)


def test_json_round_trip():
    m = LogNormalModel.empty(K).observe([0.1, 0.2], 2.5)
    d = m.to_dict()
    assert d["type"] == "lognormal"
    back = LogNormalModel.from_dict(d)
    assert back.to_dict() == d


def test_from_dict_checks_type():
    with pytest.raises(ValueError):
        LogNormalModel.from_dict({"type": "gp"})
