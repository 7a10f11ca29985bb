from __future__ import annotations

import numpy as np
import pytest

from state_saliency.features import default_schema, gait_schema
from state_saliency.mlp import Activation, LayerSpec, MlpPolicy, dumps_policy, input_jacobian
from state_saliency.saliency import IgConfig, importance_report, integrated_gradients, saliency_pipeline
from state_saliency.synth import (
    SplitMix64,
    SynthConfig,
    fd_jacobian,
    gen_planted_policy,
    gen_random_policy,
    gen_trajectory,
    ig_oracle,
)


def test_splitmix_reference_vector():
    # published outputs for seed 0
    got = SplitMix64(0).next_u64(3).tolist()
    assert got == [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]


def test_splitmix_streams_and_counter():
    a, b = SplitMix64(5, "x"), SplitMix64(5, "y")
    assert not np.array_equal(a.uniform(shape=4), b.uniform(shape=4))
    whole = SplitMix64(9).next_u64(6)
    parts = SplitMix64(9)
    assert np.array_equal(np.concatenate([parts.next_u64(2), parts.next_u64(4)]), whole)
    u = SplitMix64(1).uniform(-2.0, 3.0, (100, 3))
    assert u.shape == (100, 3) and u.min() >= -2.0 and u.max() < 3.0


def test_same_seed_same_bytes():
    cfg = SynthConfig(seed=17)
    assert dumps_policy(gen_random_policy(cfg)) == dumps_policy(gen_random_policy(cfg))
    assert dumps_policy(gen_random_policy(cfg)) != dumps_policy(gen_random_policy(SynthConfig(seed=18)))


def test_default_architecture():
    pol = gen_random_policy(SynthConfig())
    assert [(l.in_dim, l.out_dim) for l in pol.layers] == [(64, 256), (256, 256), (256, 24)]
    assert [l.activation for l in pol.layers] == [Activation.RELU, Activation.RELU, Activation.TANH]
    assert not any(l.biases.any() for l in pol.layers)
    biased = gen_random_policy(SynthConfig(bias_scale=0.2))
    assert all(0 < np.abs(l.biases).max() <= 0.2 for l in biased.layers)


def test_empty_hidden_is_single_linear_layer():
    pol = gen_random_policy(SynthConfig(hidden=()))
    assert len(pol.layers) == 1 and pol.layers[0].activation is Activation.IDENTITY


def test_planted_single_dim():
    cfg = SynthConfig(seed=2, n=8, m=4, hidden=(16,))
    pol = gen_planted_policy(cfg, [0])
    for x in np.random.default_rng(0).uniform(-1, 1, (5, 8)):
        assert not input_jacobian(pol, x)[:, 1:].any()


def test_planted_all_dims_is_random_policy():
    cfg = SynthConfig(seed=2, n=8, m=4, hidden=(16,))
    assert dumps_policy(gen_planted_policy(cfg, range(8))) == dumps_policy(gen_random_policy(cfg))
    with pytest.raises(ValueError):
        gen_planted_policy(cfg, [])
    with pytest.raises(ValueError):
        gen_planted_policy(cfg, [8])


def test_planted_joint_position_report():
    schema = default_schema()
    cfg = SynthConfig(seed=5, steps=30)
    pol = gen_planted_policy(cfg, schema.group("joint position").dims)
    rel = importance_report(saliency_pipeline(pol, gen_trajectory(cfg, schema)), schema).relative()
    assert rel["joint position"] == pytest.approx(1.0, abs=1e-15)


def test_trajectory_respects_ranges_and_phase():
    schema = gait_schema()
    traj = gen_trajectory(SynthConfig(seed=3, n=66, steps=60), schema)
    assert traj.states.shape == (60, 66) and traj.dt == pytest.approx(0.04)
    for i, r in enumerate(schema.dim_ranges()):
        if r is not None:
            assert r[0] <= traj.states[:, i].min() and traj.states[:, i].max() <= r[1]
    s, c = traj.states[:, 64], traj.states[:, 65]
    np.testing.assert_allclose(s**2 + c**2, 1.0, atol=1e-15)
    assert (s[12], c[12]) == pytest.approx((np.sin(0.96 * np.pi), np.cos(0.96 * np.pi)))
    with pytest.raises(ValueError):
        gen_trajectory(SynthConfig(n=64), schema)


def test_fd_linear_exact_and_zero_net():
    pol = gen_random_policy(SynthConfig(seed=4, n=5, m=3, hidden=()))
    x = np.linspace(-1, 1, 5)
    np.testing.assert_allclose(fd_jacobian(pol, x), pol.layers[0].weights, atol=1e-10)
    zero = gen_random_policy(SynthConfig(n=5, m=3, hidden=(4,), weight_scale=0.0))
    assert not fd_jacobian(zero, x).any()
    with pytest.raises(ValueError):
        fd_jacobian(pol, x, h=0.0)


def test_fd_matches_tanh_net():
    pol = gen_random_policy(SynthConfig(seed=4, n=6, m=3, hidden=(5,)))
    tanh_net = MlpPolicy(tuple(LayerSpec(l.weights, l.biases, Activation.TANH) for l in pol.layers))
    x = np.full(6, 0.4)
    ref = input_jacobian(tanh_net, x, range(3))
    assert np.max(np.abs(fd_jacobian(tanh_net, x) - ref)) / np.max(np.abs(ref)) < 1e-5


def test_oracle_linear_matches_p1():
    pol = gen_random_policy(SynthConfig(seed=6, hidden=()))
    x = np.linspace(-1, 1, 64)
    np.testing.assert_allclose(ig_oracle(pol, x, p_large=4096).total,
                               integrated_gradients(pol, x, IgConfig(steps=1)).total, rtol=0, atol=1e-12)
    with pytest.raises(ValueError):
        ig_oracle(pol, x, p_large=100)
