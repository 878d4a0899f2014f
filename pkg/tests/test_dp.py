import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vfgboost.dp import DpParams, clip_leaf, noise_sigma, perturb_leaf


def test_clip_values():
    assert clip_leaf(5.0, 2.0) == pytest.approx(2.0)
    assert clip_leaf(1.0, 2.0) == 1.0
    assert clip_leaf(-3.0, 2.0) == pytest.approx(-2.0)


@settings(max_examples=200, deadline=None)
@given(w=st.floats(-1e6, 1e6), clip=st.floats(1e-3, 1e3))
def test_clip_bound_always_holds(w, clip):
    assert abs(clip_leaf(w, clip)) <= clip + 1e-12


def test_sigma_formula_value():
    # sqrt(5 * ln(1e5)) / 8, evaluated independently
    params = DpParams(epsilon=8.0, delta=1e-5, clip=2.0, steps=5)
    expect = math.sqrt(5 * math.log(1e5)) / 8
    assert noise_sigma(params) == pytest.approx(expect)
    assert noise_sigma(params) == pytest.approx(0.9485, abs=2e-4)


def test_sigma_scalings():
    base = DpParams(epsilon=4.0, delta=1e-5, clip=2.0, steps=4)
    assert noise_sigma(DpParams(epsilon=8.0, delta=1e-5, clip=2.0, steps=4)) == \
        pytest.approx(noise_sigma(base) / 2)
    assert noise_sigma(DpParams(epsilon=4.0, delta=1e-5, clip=2.0, steps=16)) == \
        pytest.approx(noise_sigma(base) * 2)


def test_param_validation():
    with pytest.raises(ValueError):
        DpParams(epsilon=0.0).validate()
    with pytest.raises(ValueError):
        DpParams(delta=1.5).validate()
    with pytest.raises(ValueError):
        DpParams(clip=0.0).validate()
    with pytest.raises(ValueError):
        DpParams(steps=0).validate()


def test_degenerate_noise_returns_clipped_value():
    # epsilon -> infinity drives sigma to 0
    params = DpParams(epsilon=1e18, delta=1e-5, clip=2.0, steps=5)
    out = perturb_leaf(5.0, params, random.Random(0))
    assert out.value == pytest.approx(2.0, abs=1e-12)
    assert out.was_perturbed


def test_perturb_requires_enabled():
    with pytest.raises(ValueError):
        perturb_leaf(1.0, DpParams(enabled=False), random.Random(0))


def test_empirical_noise_std():
    params = DpParams(epsilon=8.0, delta=1e-5, clip=2.0, steps=5)
    sigma = noise_sigma(params)
    rng = random.Random(42)
    draws = np.array([perturb_leaf(0.0, params, rng).value for _ in range(10_000)])
    assert np.std(draws) == pytest.approx(2 * 2.0 * sigma, rel=0.05)


def test_perturbation_centered_at_clipped_value():
    params = DpParams(epsilon=8.0, delta=1e-5, clip=2.0, steps=5)
    rng = random.Random(7)
    draws = np.array([perturb_leaf(5.0, params, rng).value for _ in range(20_000)])
    assert np.mean(draws) == pytest.approx(2.0, abs=0.1)


def test_standardized_noise_is_unit_normal():
    params = DpParams(epsilon=8.0, delta=1e-5, clip=2.0, steps=5)
    scale = 2 * params.clip * noise_sigma(params)
    rng = random.Random(11)
    n = 100_000
    z = np.array([(perturb_leaf(1.0, params, rng).value - 1.0) / scale
                  for _ in range(n)])
    assert abs(np.mean(z)) < 4 / math.sqrt(n)
    assert np.var(z) == pytest.approx(1.0, rel=0.05)
