from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import dense_layer, linear_policy
from state_saliency.errors import ComputationError
from state_saliency.mlp import Activation, MlpPolicy, forward, input_jacobian
from state_saliency.pathsum import affine_eligible, affine_path_sum, dense_path_sum, path_gradient_sum
from state_saliency.saliency import IgConfig, integrated_gradients
from state_saliency.synth import SplitMix64, SynthConfig, gen_random_policy, ig_oracle


def naive_path_sum(policy, start, end, p, rows):
    total = np.zeros((len(rows), policy.input_dim))
    for k in range(1, p + 1):
        total += input_jacobian(policy, start + k / p * (end - start), rows)
    return total


def test_scalar_linear_any_p():
    pol = linear_policy([[2.0]])
    for p in (1, 7, 25, 1000):
        assert integrated_gradients(pol, np.array([3.0]), IgConfig(steps=p)).total.tolist() == [6.0]


def test_two_input_linear_signed_and_total():
    pol = linear_policy([[1.0, -1.0]])
    att = integrated_gradients(pol, np.array([0.5, 0.5]))
    assert att.signed.tolist() == [[0.5, -0.5]]
    assert att.total.tolist() == [0.5, 0.5]


def test_linear_is_independent_of_p():
    pol = gen_random_policy(SynthConfig(seed=9, hidden=()))
    x = np.linspace(-1, 1, 64)
    ref = integrated_gradients(pol, x, IgConfig(steps=1)).total
    for p in (2, 25, 4096):
        np.testing.assert_allclose(integrated_gradients(pol, x, IgConfig(steps=p)).total, ref, rtol=0, atol=1e-12)


def test_p25_close_to_oracle_on_fan_in_scaled_net():
    for seed in range(5):
        pol = gen_random_policy(SynthConfig(seed=seed, weight_scale=0.125))
        x = SplitMix64(seed, "x").uniform(-1, 1, 64)
        ref = ig_oracle(pol, x).total
        got = integrated_gradients(pol, x).total
        assert np.max(np.abs(got - ref)) / np.max(ref) < 5e-2


def test_riemann_error_shrinks_like_one_over_p():
    pol = gen_random_policy(SynthConfig(seed=0))
    x = SplitMix64(0, "x").uniform(-1, 1, 64)
    ref = ig_oracle(pol, x).total
    errs = [np.max(np.abs(integrated_gradients(pol, x, IgConfig(steps=p)).total - ref)) for p in (50, 100, 200)]
    assert 1.8 < errs[0] / errs[1] < 2.2 and 1.8 < errs[1] / errs[2] < 2.2


@pytest.mark.parametrize("bias_scale", [0.0, 0.5])
@pytest.mark.parametrize("p", [1, 3, 25, 300])
def test_routes_match_naive_loop(bias_scale, p):
    pol = gen_random_policy(SynthConfig(seed=21, n=10, m=6, hidden=(16, 12), bias_scale=bias_scale))
    rng = SplitMix64(p, "pts")
    start, end = rng.uniform(-1, 1, 10), rng.uniform(-2, 2, 10)
    rows = np.arange(6)
    ref = naive_path_sum(pol, start, end, p, rows)
    for method in ("dense", "affine", "auto"):
        np.testing.assert_allclose(path_gradient_sum(pol, start, end, p, rows, method), ref, rtol=0, atol=1e-10)


def test_routes_agree_across_chunk_boundary():
    pol = gen_random_policy(SynthConfig(seed=5, n=8, m=4, hidden=(20, 20), bias_scale=0.3))
    x = np.linspace(-1.5, 1.5, 8)
    rows = np.arange(4)
    a = dense_path_sum(pol, np.zeros(8), x, 5000, rows)
    b = affine_path_sum(pol, np.zeros(8), x, 5000, rows)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-9)


def test_relu_path_hitting_kink_exactly():
    # unit turns on exactly at alpha = 0.5, a grid point for even p
    w1 = np.array([[1.0], [-1.0]])
    b1 = np.array([-0.5, 0.0])
    pol = MlpPolicy((dense_layer(w1, b1, Activation.RELU), dense_layer([[1.0, 1.0]])))
    for p in (2, 4, 10):
        rows = np.arange(1)
        ref = naive_path_sum(pol, np.zeros(1), np.ones(1), p, rows)
        for method in ("dense", "affine"):
            assert path_gradient_sum(pol, np.zeros(1), np.ones(1), p, rows, method) == pytest.approx(ref, abs=1e-14)


def test_affine_route_requires_piecewise_linear_hidden():
    tanh_hidden = MlpPolicy((dense_layer(np.ones((2, 2)), act=Activation.TANH), dense_layer(np.ones((1, 2)))))
    assert not affine_eligible(tanh_hidden)
    with pytest.raises(ValueError):
        path_gradient_sum(tanh_hidden, np.zeros(2), np.ones(2), 5, np.arange(1), "affine")
    ref = naive_path_sum(tanh_hidden, np.zeros(2), np.ones(2), 5, np.arange(1))
    np.testing.assert_allclose(path_gradient_sum(tanh_hidden, np.zeros(2), np.ones(2), 5, np.arange(1)), ref, atol=1e-13)


def test_bad_step_count():
    with pytest.raises(ValueError):
        IgConfig(steps=0)
    with pytest.raises(ValueError):
        path_gradient_sum(linear_policy([[1.0]]), np.zeros(1), np.ones(1), 0, np.arange(1))


def test_nonzero_baseline_completeness():
    pol = gen_random_policy(SynthConfig(seed=8, n=6, m=4, hidden=(12,), bias_scale=0.2))
    base = np.full(6, -0.3)
    x = np.linspace(-1, 1, 6)
    att = ig_oracle(pol, x, baseline=base, mask=range(4))
    delta = forward(pol, x) - forward(pol, base)
    np.testing.assert_allclose(att.signed.sum(axis=1), delta, rtol=1e-3)


def test_zero_input_dims_get_zero_attribution():
    pol = gen_random_policy(SynthConfig(seed=1, n=6, m=2, hidden=(8,)))
    w = pol.layers[0].weights.copy()
    w[:, [1, 4]] = 0.0
    pol = MlpPolicy((dense_layer(w, pol.layers[0].biases, Activation.RELU), pol.layers[1]))
    total = integrated_gradients(pol, np.ones(6)).total
    assert total[1] == 0.0 and total[4] == 0.0 and total[[0, 2, 3, 5]].all()


def test_mask_selects_outputs():
    pol = linear_policy([[1.0, 0.0], [0.0, 2.0], [5.0, 5.0]])
    x = np.array([1.0, 1.0])
    assert integrated_gradients(pol, x).total.tolist() == [6.0, 7.0]  # odd width: all outputs
    assert integrated_gradients(pol, x, IgConfig(mask=(1,))).total.tolist() == [0.0, 2.0]


def test_input_validation():
    pol = linear_policy([[1.0, 1.0]])
    with pytest.raises(ValueError):
        integrated_gradients(pol, np.zeros(3))
    with pytest.raises(ValueError):
        integrated_gradients(pol, np.array([np.inf, 0.0]))
    with pytest.raises(ValueError):
        integrated_gradients(pol, np.zeros(2), IgConfig(baseline=np.zeros(3)))


def test_overflowing_path_is_reported():
    pol = linear_policy([[1e308, 1e308]])
    with pytest.raises(ComputationError):
        path_gradient_sum(pol, np.zeros(2), np.ones(2), 3, np.arange(1), "dense")


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 40))
def test_zero_bias_relu_net_exact_from_origin(seed, p):
    # zero-bias ReLU with an identity head is positively homogeneous: the
    # gradient is constant along any ray from the origin, so every p is exact
    pol = gen_random_policy(SynthConfig(seed=seed, n=5, m=3, hidden=(6, 4)))
    pol = MlpPolicy((*pol.layers[:-1], dense_layer(pol.layers[-1].weights)))
    x = SplitMix64(seed, "x").uniform(-1, 1, 5)
    att = integrated_gradients(pol, x, IgConfig(steps=p, mask=(0, 1, 2)))
    delta = forward(pol, x)
    np.testing.assert_allclose(att.signed.sum(axis=1), delta, rtol=0, atol=1e-12)
    np.testing.assert_allclose(att.signed, input_jacobian(pol, x) * x[None, :], rtol=0, atol=1e-12)
