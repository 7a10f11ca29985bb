"""Seeded synthetic policies/trajectories and brute-force numerical oracles.

Random numbers come from SplitMix64 (Steele, Lea & Flood 2014), written out
here so fixtures are identical on every platform and numpy version::

    state_k = seed + k * 0x9E3779B97F4A7C15          (mod 2**64)
    z = (state_k ^ (state_k >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    out_k = z ^ (z >> 31)

A uniform double in [0, 1) is ``(out_k >> 11) * 2**-53``.  Independent
streams are derived from the seed by hashing a stream label into it.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .features import FEEDFORWARD, PhaseConfig, StateSchema, Trajectory, phase, phase_vector
from .mlp import Activation, LayerSpec, MlpPolicy, forward
from .saliency import IgConfig, integrated_gradients

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


class SplitMix64:
    """Counter-based SplitMix64 stream; vectorised over draw indices."""

    def __init__(self, seed: int, stream: str = "") -> None:
        if stream:
            h = int.from_bytes(hashlib.sha256(stream.encode()).digest()[:8], "little")
            seed = seed ^ h
        self._state = int(seed) & _MASK64
        self._counter = 0

    def next_u64(self, size: int) -> np.ndarray:
        k = np.arange(self._counter + 1, self._counter + 1 + size, dtype=np.uint64)
        self._counter += size
        with np.errstate(over="ignore"):
            z = np.uint64(self._state) + k * _GAMMA
            z = (z ^ (z >> np.uint64(30))) * _M1
            z = (z ^ (z >> np.uint64(27))) * _M2
        return z ^ (z >> np.uint64(31))

    def uniform(self, low: float = 0.0, high: float = 1.0, shape: int | tuple[int, ...] = ()) -> np.ndarray:
        size = int(np.prod(shape, dtype=np.int64)) if shape != () else 1
        u = (self.next_u64(size) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        return (low + (high - low) * u).reshape(shape)


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    n: int = 64
    m: int = 24
    steps: int = 100
    hidden: tuple[int, ...] = (256, 256)
    planted_group: str | None = None
    weight_scale: float = 0.5  # weights ~ U(-weight_scale, weight_scale)
    bias_scale: float = 0.0  # biases ~ U(-bias_scale, bias_scale); 0 gives zero biases

    def __post_init__(self) -> None:
        if min(self.n, self.m, self.steps) < 1 or any(h < 1 for h in self.hidden):
            raise ValueError("synthetic dimensions must be positive")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))


def gen_random_policy(cfg: SynthConfig) -> MlpPolicy:
    """ReLU hidden layers and a tanh output layer (one linear layer when
    ``hidden`` is empty)."""
    rng = SplitMix64(cfg.seed, "policy")
    dims = [cfg.n, *cfg.hidden, cfg.m]
    layers = []
    for k, (i, o) in enumerate(zip(dims[:-1], dims[1:])):
        w = rng.uniform(-cfg.weight_scale, cfg.weight_scale, (o, i))
        b = rng.uniform(-cfg.bias_scale, cfg.bias_scale, o) if cfg.bias_scale > 0 else np.zeros(o)
        if not cfg.hidden:
            act = Activation.IDENTITY
        else:
            act = Activation.TANH if k == len(dims) - 2 else Activation.RELU
        layers.append(LayerSpec(w, b, act))
    return MlpPolicy(tuple(layers))


def gen_planted_policy(cfg: SynthConfig, relevant: Sequence[int]) -> MlpPolicy:
    """A random policy whose first layer ignores every input outside ``relevant``."""
    rel = sorted({int(i) for i in relevant})
    if not rel:
        raise ValueError("relevant dim set is empty")
    if rel[0] < 0 or rel[-1] >= cfg.n:
        raise ValueError(f"relevant dims must lie in [0, {cfg.n})")
    base = gen_random_policy(cfg)
    first = base.layers[0]
    w = first.weights.copy()
    keep = np.zeros(cfg.n, dtype=bool)
    keep[rel] = True
    w[:, ~keep] = 0.0
    return MlpPolicy((LayerSpec(w, first.biases, first.activation), *base.layers[1:]), base.action_mask)


def gen_trajectory(
    cfg: SynthConfig, schema: StateSchema, phase_cfg: PhaseConfig = PhaseConfig()
) -> Trajectory:
    """Smooth sum-of-sinusoids signals, one per state dim.

    Dims with a schema range stay inside it; others have amplitude about 1.
    Feedforward groups are filled pairwise with the gait phase vector.
    """
    if schema.total_dim != cfg.n:
        raise ValueError(f"schema has {schema.total_dim} dims, config says {cfg.n}")
    rng = SplitMix64(cfg.seed, "trajectory")
    dt = 1.0 / phase_cfg.control_hz
    t = np.arange(cfg.steps) * dt
    n_waves = 3
    freq = rng.uniform(0.1, 2.0, (cfg.n, n_waves))
    ph = rng.uniform(0.0, 2 * np.pi, (cfg.n, n_waves))
    amp = rng.uniform(0.2, 1.0, (cfg.n, n_waves))
    offset = rng.uniform(-0.5, 0.5, cfg.n)
    wave = np.einsum("dw,tdw->td", amp, np.sin(2 * np.pi * freq[None] * t[:, None, None] + ph[None]))
    # normalise every column into [-1, 1] before mapping onto ranges
    unit = (wave / amp.sum(axis=1)[None, :]) * 0.5 + offset[None, :]
    states = np.clip(unit, -1.0, 1.0)
    for i, r in enumerate(schema.dim_ranges()):
        if r is not None:
            lo, hi = r
            states[:, i] = lo + (states[:, i] + 1.0) * 0.5 * (hi - lo)
    pv = np.array([phase_vector(phase(k, phase_cfg)) for k in range(cfg.steps)])
    for g in schema.groups:
        if g.kind != FEEDFORWARD:
            continue
        for j, i in enumerate(g.dims):
            states[:, i] = pv[:, j % 2]
    return Trajectory(states, dt=dt)


# -- oracles -------------------------------------------------------------------


def fd_jacobian(policy: MlpPolicy, x: np.ndarray, h: float = 1e-5, rows: Sequence[int] | None = None) -> np.ndarray:
    """Central finite-difference Jacobian (outputs x inputs)."""
    if not h > 0:
        raise ValueError("finite-difference step must be positive")
    x = np.asarray(x, dtype=np.float64)
    eye = np.eye(x.size) * h
    plus = forward(policy, x[None, :] + eye)
    minus = forward(policy, x[None, :] - eye)
    jac = ((plus - minus) / (2.0 * h)).T
    return jac if rows is None else jac[np.asarray(rows)]


def ig_oracle(
    policy: MlpPolicy,
    x: np.ndarray,
    baseline: np.ndarray | None = None,
    p_large: int = 65536,
    mask: Sequence[int] | None = None,
):
    """High-resolution right-endpoint integrated gradients on the dense route."""
    if p_large < 1024:
        raise ValueError("oracle resolution must be at least 1024 steps")
    cfg = IgConfig(steps=p_large, baseline=baseline, mask=None if mask is None else tuple(mask), method="dense")
    return integrated_gradients(policy, x, cfg)
