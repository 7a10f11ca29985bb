"""End-to-end acceptance checks.  Each ``test_acNN_*`` maps to one criterion
and the conftest hook prints a PASS/FAIL line for it."""

from __future__ import annotations

import json
import math
import time
import warnings
from pathlib import Path

import numpy as np
import pytest

from state_saliency.cli import cmd_analyze, main
from state_saliency.evaluation import (
    GAIT,
    RECOVERY,
    REWARD_ALPHAS,
    EpisodeRecord,
    MetricTargets,
    heading_accuracy,
    rbf_reward,
    recovery_speed,
    score_episode,
    torque_metric,
)
from state_saliency.features import (
    StateSchema,
    Trajectory,
    default_schema,
    gait_schema,
    save_schema,
    write_trajectory,
)
from state_saliency.mlp import Activation, LayerSpec, MlpPolicy, forward, input_jacobian, save_policy
from state_saliency.saliency import IgConfig, importance_report, integrated_gradients, read_matrix_csv, saliency_pipeline
from state_saliency.stats import group_correlation, pearson_abs_matrix
from state_saliency.synth import (
    SplitMix64,
    SynthConfig,
    fd_jacobian,
    gen_planted_policy,
    gen_random_policy,
    gen_trajectory,
)

N_POLICIES = 20
N_INPUTS = 5
KINK_GAP = 1e-3


def hidden_preacts(policy: MlpPolicy, x: np.ndarray) -> list[np.ndarray]:
    out, a = [], x
    for layer in policy.layers[:-1]:
        z = layer.weights @ a + layer.biases
        out.append(z)
        a = layer.activation.apply(z)
    return out


def kink_free_inputs(policy: MlpPolicy, seed: int, count: int) -> list[np.ndarray]:
    """Uniform inputs in [-1, 1]^n whose hidden pre-activations all stay at
    least ``KINK_GAP`` away from zero."""
    rng = SplitMix64(seed, "acceptance-inputs")
    xs = []
    while len(xs) < count:
        x = rng.uniform(-1.0, 1.0, policy.input_dim)
        if all(np.min(np.abs(z)) >= KINK_GAP for z in hidden_preacts(policy, x)):
            xs.append(x)
    return xs


@pytest.fixture(scope="module")
def reference_policies():
    return [gen_random_policy(SynthConfig(seed=s)) for s in range(N_POLICIES)]


def test_ac01_gradient_correctness(reference_policies):
    t0 = time.perf_counter()
    worst = 0.0
    for s, pol in enumerate(reference_policies):
        assert (pol.input_dim, pol.output_dim) == (64, 24)
        assert [l.out_dim for l in pol.layers] == [256, 256, 24]
        for x in kink_free_inputs(pol, s, N_INPUTS):
            rows = np.arange(pol.output_dim)
            jac = input_jacobian(pol, x, rows)
            ref = fd_jacobian(pol, x, h=1e-5)
            worst = max(worst, np.max(np.abs(jac - ref)) / np.max(np.abs(ref)))
    elapsed = time.perf_counter() - t0
    assert worst < 1e-5, f"max relative Jacobian error {worst:.3e}"
    assert elapsed < 5.0, f"took {elapsed:.2f} s"


def test_ac02_ig_completeness(reference_policies):
    t0 = time.perf_counter()
    all_rows = tuple(range(24))
    worst = 0.0
    better = total = 0
    for s, pol in enumerate(reference_policies):
        for x in kink_free_inputs(pol, s, N_INPUTS):
            delta = forward(pol, x) - forward(pol, np.zeros_like(x))
            errs = {}
            for p in (65536, 25, 2):
                att = integrated_gradients(pol, x, IgConfig(steps=p, mask=all_rows))
                errs[p] = np.abs(att.signed.sum(axis=1) - delta)
            worst = max(worst, float(np.max(errs[65536] / np.abs(delta))))
            better += int(np.sum(errs[25] < errs[2]))
            total += delta.size
    elapsed = time.perf_counter() - t0
    assert worst <= 1e-3, f"worst relative completeness error {worst:.3e}"
    assert better / total >= 0.95, f"p=25 beat p=2 on {better}/{total}"
    assert elapsed < 60.0, f"took {elapsed:.2f} s"


@pytest.mark.parametrize("depth", [1, 2, 3])
def test_ac03_linear_exactness(depth):
    rng = SplitMix64(depth, "linear")
    dims = [64] + [48] * (depth - 1) + [24]
    layers = tuple(
        LayerSpec(rng.uniform(-0.5, 0.5, (o, i)), np.zeros(o), Activation.IDENTITY)
        for i, o in zip(dims[:-1], dims[1:])
    )
    pol = MlpPolicy(layers)
    w_eff = np.eye(64)
    for layer in layers:
        w_eff = layer.weights @ w_eff
    for k in range(4):
        x = rng.uniform(-1.0, 1.0, 64)
        expected = np.abs(w_eff * x[None, :]).sum(axis=0)
        for p in (1, 25, 1000):
            got = integrated_gradients(pol, x, IgConfig(steps=p, mask=tuple(range(24)))).total
            assert np.max(np.abs(got - expected)) <= 1e-12, (p, np.max(np.abs(got - expected)))


def _write_triple(tmp: Path, policy: MlpPolicy, schema: StateSchema, traj: Trajectory) -> tuple[Path, Path, Path]:
    tmp.mkdir(parents=True, exist_ok=True)
    save_policy(policy, tmp / "policy.json")
    save_schema(schema, tmp / "schema.json")
    write_trajectory(traj, tmp / "trajectory.csv")
    return tmp / "policy.json", tmp / "trajectory.csv", tmp / "schema.json"


def _relative(out: Path) -> dict[str, float]:
    doc = json.loads((out / "importance.json").read_text())
    return {g["name"]: g["r"] for g in doc["groups"]}


def test_ac04_planted_relevance(tmp_path):
    schema = default_schema()
    for k, group in enumerate(schema.groups):
        cfg = SynthConfig(seed=100 + k, steps=40, planted_group=group.name)
        pol = gen_planted_policy(cfg, group.dims)
        files = _write_triple(tmp_path / f"in{k}", pol, schema, gen_trajectory(cfg, schema))
        cmd_analyze([files[0]], [files[1]], files[2], tmp_path / f"out{k}")
        rel = _relative(tmp_path / f"out{k}")
        assert abs(rel[group.name] - 1.0) <= 1e-12
        assert all(v == 0.0 for name, v in rel.items() if name != group.name)


def test_ac05_normalization_contract(tmp_path):
    for seed in range(50):
        gait = seed % 2 == 1
        schema = gait_schema() if gait else default_schema()
        cfg = SynthConfig(seed=seed, n=schema.total_dim, steps=30, bias_scale=0.1 * (seed % 3))
        pol = gen_random_policy(cfg)
        files = _write_triple(tmp_path / f"in{seed}", pol, schema, gen_trajectory(cfg, schema))
        out = tmp_path / f"out{seed}"
        cmd_analyze(
            [files[0]], [files[1]], files[2], out,
            method="max" if seed % 4 == 0 else "mean", include_ff=seed % 5 == 0,
        )
        rel = _relative(out)
        assert abs(sum(rel.values()) - 1.0) <= 1e-12
        s, _ = read_matrix_csv(out / "saliency.csv")
        assert s.min() >= 0.0 and s.max() <= 1.0
        assert s.max() == 1.0 or not s.any()


def test_ac06_permutation_equivariance():
    schema = default_schema()
    for case in range(10):
        cfg = SynthConfig(seed=200 + case, steps=30)
        pol = gen_random_policy(cfg)
        states = gen_trajectory(cfg, schema).states
        perm = np.random.default_rng(case).permutation(64)
        first = pol.layers[0]
        pol_p = MlpPolicy(
            (LayerSpec(first.weights[:, perm], first.biases, first.activation), *pol.layers[1:]),
            pol.action_mask,
        )
        schema_p = schema.permuted(perm)
        for method in ("mean", "max"):
            a = importance_report(saliency_pipeline(pol, states), schema, method).relative()
            b = importance_report(saliency_pipeline(pol_p, states[:, perm]), schema_p, method).relative()
            assert a.keys() == b.keys()
            for name in a:
                assert abs(a[name] - b[name]) <= 1e-12, (case, method, name)


def _random_episode(rng: np.random.Generator) -> EpisodeRecord:
    n = int(rng.integers(1, 60))
    g = rng.normal(size=(n, 3))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    horizon = float(rng.uniform(0.5, 20.0))
    return EpisodeRecord(
        torques=rng.uniform(-33.5, 33.5, (n, 12)) * rng.uniform(0, 1),
        height=rng.uniform(0.0, 0.6, n),
        gravity=g,
        planar_velocity=rng.normal(scale=rng.uniform(0.01, 2.0), size=(n, 2)),
        speed=rng.uniform(0.0, 2.0, n),
        final_feet=rng.uniform(-0.6, 0.6, 8),
        recovery_time=float(rng.uniform(0.0, horizon)),
        horizon=horizon,
    )


def test_ac07_metric_bounds_and_anchors():
    rng = np.random.default_rng(2024)
    presets = [MetricTargets.recovery(), MetricTargets.trotting(), MetricTargets.bounding()]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for k in range(10_000):
            task = RECOVERY if k % 2 == 0 else GAIT
            ms = score_episode(_random_episode(rng), presets[k % 3], task)
            for name, v in ms.scores.items():
                assert 0.0 <= v <= 1.0, (k, name, v)

    tau = np.zeros((10, 12))
    tau[:, 3] = 33.5 / 2
    assert abs(torque_metric(tau) - 0.9583333333333334) <= 1e-12
    assert abs(recovery_speed(1.48, 10.0) - 0.852) <= 1e-12
    assert heading_accuracy(np.array([[0.0, 0.7], [0.0, -0.2]]), (0.5, 0.0)) == 0.5
    alpha = REWARD_ALPHAS["base orientation"]
    assert alpha == -2.35
    assert abs(rbf_reward(0.0, 1.0, alpha) - math.exp(-2.35)) <= 1e-12


def _naive_group_corr(r: np.ndarray, schema: StateSchema) -> np.ndarray:
    k = len(schema.groups)
    out = np.zeros((k, k))
    for a, ga in enumerate(schema.groups):
        for b, gb in enumerate(schema.groups):
            total, count = 0.0, 0
            for i in ga.dims:
                for j in gb.dims:
                    if a == b and i == j:
                        continue
                    total += r[i, j]
                    count += 1
            out[a, b] = total / count if count else 1.0
    return out


def test_ac08_correlation_contract():
    schema = default_schema()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for seed in range(20):
            states = gen_trajectory(SynthConfig(seed=seed, steps=80), schema).states
            r = pearson_abs_matrix(states)
            assert np.array_equal(r, r.T)
            assert np.all(np.diag(r) == 1.0)
            g = group_correlation(r, schema)
            assert np.max(np.abs(g - _naive_group_corr(r, schema))) <= 1e-12


def _tree_bytes(root: Path) -> dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_ac09_end_to_end_determinism(tmp_path, monkeypatch):
    import os

    monkeypatch.chdir(tmp_path)
    assert main(["synth", "--seed", "7", "--out", "s"]) == 0
    monkeypatch.setenv("SALIENCY_THREADS", "1")
    assert main(["analyze", "--policy", "s/policy.json", "--trajectory", "s/trajectory.csv",
                 "--schema", "s/schema.json", "--out", "a1"]) == 0
    monkeypatch.setenv("SALIENCY_THREADS", str(max(2, os.cpu_count() or 1)))
    assert main(["analyze", "--policy", "s/policy.json", "--trajectory", "s/trajectory.csv",
                 "--schema", "s/schema.json", "--out", "a2"]) == 0
    first, second = _tree_bytes(tmp_path / "a1"), _tree_bytes(tmp_path / "a2")
    assert first.keys() == second.keys() and "manifest.json" in first
    for name in first:
        assert first[name] == second[name], name


def test_ac10_default_schema_structure(tmp_path):
    schema = default_schema()
    assert schema.total_dim == 64
    assert schema.names == [
        "joint position", "gravity vector", "base linear velocity", "base angular velocity",
        "foot position", "base position", "foot contact", "joint torque", "joint velocity",
    ]
    assert [g.size for g in schema.groups] == [12, 3, 3, 3, 12, 3, 4, 12, 12]
    for seed in (1, 2, 3):
        cfg = SynthConfig(seed=seed, steps=25)
        files = _write_triple(tmp_path / f"in{seed}", gen_random_policy(cfg), schema, gen_trajectory(cfg, schema))
        cmd_analyze([files[0]], [files[1]], files[2], tmp_path / f"out{seed}")
        lines = (tmp_path / f"out{seed}" / "doughnut.csv").read_text().splitlines()
        assert lines[0] == "group,percent"
        assert [ln.rsplit(",", 1)[0] for ln in lines[1:]] == schema.names
        assert abs(sum(float(ln.rsplit(",", 1)[1]) for ln in lines[1:]) - 100.0) <= 0.01
