"""Task-performance metrics for recovery and gait episodes, and RBF rewards.

Every metric lies in [0, 1], higher is better.  Recovery episodes are scored
on torque, recovery speed, final foot placement, final height and final
orientation; gait episodes on torque, forward velocity, heading, height and
orientation.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import ChannelError, FormatError

RECOVERY = "recovery"
GAIT = "gait"
RECOVERY_METRICS = ("s_tau", "s_r", "s_f", "s_hN", "s_phiN")
GAIT_METRICS = ("s_tau", "s_v", "s_psi", "s_h", "s_phi")
UNIT_TOL = 1e-6


class MetricClampWarning(UserWarning):
    pass


@dataclass(frozen=True)
class MetricTargets:
    max_torque: float = 33.5  # N m
    height: float = 0.3  # m
    foot_placement: tuple[float, ...] = (0.18, 0.13, -0.18, -0.13, -0.18, 0.13, 0.18, -0.13)
    placement_scale: float = 0.3  # m
    speed: float = 0.5  # m/s
    planar_velocity: tuple[float, float] = (0.5, 0.0)
    gravity: tuple[float, float, float] = (0.0, 0.0, -1.0)

    def __post_init__(self) -> None:
        for name in ("max_torque", "height", "placement_scale", "speed"):
            if not getattr(self, name) > 0:
                raise ValueError(f"target {name} must be positive")
        if len(self.foot_placement) != 8:
            raise ValueError("nominal foot placement needs 8 planar coordinates")
        if len(self.planar_velocity) != 2 or np.linalg.norm(self.planar_velocity) == 0:
            raise ValueError("nominal planar velocity must be a non-zero 2-vector")
        if abs(np.linalg.norm(self.gravity) - 1.0) > UNIT_TOL:
            raise ValueError("nominal gravity must be a unit 3-vector")

    @classmethod
    def recovery(cls) -> "MetricTargets":
        return cls(height=0.25)

    @classmethod
    def trotting(cls) -> "MetricTargets":
        return cls(height=0.3, speed=0.5, planar_velocity=(0.5, 0.0))

    @classmethod
    def bounding(cls) -> "MetricTargets":
        return cls(height=0.3, speed=1.0, planar_velocity=(1.0, 0.0))

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "MetricTargets":
        presets = {"recovery": cls.recovery, "trotting": cls.trotting, "bounding": cls.bounding}
        doc = dict(doc)
        preset = doc.pop("preset", None)
        if preset is not None and preset not in presets:
            raise FormatError(f"unknown targets preset {preset!r}")
        base = presets[preset]() if preset else cls()
        known = {f for f in cls.__dataclass_fields__}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise FormatError(f"unknown target fields {unknown}")
        fixed = {k: tuple(v) if isinstance(v, list) else v for k, v in doc.items()}
        try:
            return replace(base, **fixed)
        except (TypeError, ValueError) as exc:
            raise FormatError(f"invalid targets: {exc}") from None


@dataclass(frozen=True)
class EpisodeRecord:
    """Per-step channels (rows = timesteps) plus end-of-episode scalars.

    Channels a task does not use may be ``None``.
    """

    torques: np.ndarray | None = None  # (N, 12) N m
    height: np.ndarray | None = None  # (N,) m
    gravity: np.ndarray | None = None  # (N, 3) unit
    planar_velocity: np.ndarray | None = None  # (N, 2) m/s
    speed: np.ndarray | None = None  # (N,) m/s
    final_feet: np.ndarray | None = None  # (8,) m
    final_height: float | None = None
    final_gravity: np.ndarray | None = None  # (3,)
    recovery_time: float | None = None  # s
    horizon: float | None = None  # s
    indicators: Mapping[str, float] = field(default_factory=dict)

    @property
    def steps(self) -> int:
        for ch in (self.torques, self.height, self.gravity, self.planar_velocity, self.speed):
            if ch is not None:
                return len(ch)
        return 0


def _need(value, name: str):
    if value is None:
        raise ChannelError(f"missing channel {name!r}")
    return value


def _clamped(value: float, name: str) -> float:
    if value < 0.0 or value > 1.0:
        warnings.warn(f"{name}={value:.6g} clamped to [0, 1]", MetricClampWarning, stacklevel=3)
        return min(1.0, max(0.0, value))
    return value


def _check_unit(g: np.ndarray, name: str) -> np.ndarray:
    g = np.asarray(g, dtype=np.float64)
    norms = np.linalg.norm(np.atleast_2d(g), axis=1)
    if np.any(np.abs(norms - 1.0) > UNIT_TOL):
        raise ValueError(f"{name} is not a unit vector (norms {norms.min():.9g}..{norms.max():.9g})")
    return g


def torque_metric(torques: np.ndarray, max_torque: float = 33.5) -> float:
    tau = np.abs(np.asarray(_need(torques, "tau"), dtype=np.float64))
    if tau.ndim != 2 or tau.shape[1] != 12 or tau.shape[0] < 1:
        raise ChannelError(f"torques must be N x 12, got {tau.shape}")
    if np.any(tau > max_torque):
        warnings.warn("torques above the joint limit clamped", MetricClampWarning, stacklevel=2)
        tau = np.minimum(tau, max_torque)
    return _clamped(1.0 - float(np.mean(tau / max_torque)), "s_tau")


def recovery_speed(recovery_time: float, horizon: float) -> float:
    if not horizon > 0:
        raise ValueError("episode horizon must be positive")
    if recovery_time < 0 or recovery_time > horizon:
        raise ValueError(f"recovery time {recovery_time} outside [0, {horizon}]")
    return 1.0 - recovery_time / horizon


def foot_placement(feet: Sequence[float], targets: MetricTargets = MetricTargets()) -> float:
    p = np.asarray(feet, dtype=np.float64)
    if p.shape != (8,):
        raise ChannelError(f"final foot placement needs 8 coordinates, got {p.size}")
    dev = np.abs(p - np.asarray(targets.foot_placement)) / targets.placement_scale
    return _clamped(1.0 - float(dev.mean()), "s_f")


def final_height(h: float, nominal: float) -> float:
    if h < 0:
        raise ValueError("height must be non-negative")
    return min(h, nominal) / nominal


def mean_height(heights: np.ndarray, nominal: float) -> float:
    h = np.asarray(heights, dtype=np.float64)
    if h.size == 0 or np.any(h < 0):
        raise ValueError("heights must be a non-empty non-negative series")
    return float(np.mean(np.minimum(h, nominal) / nominal))


def final_orientation(g: Sequence[float], nominal: Sequence[float] = (0.0, 0.0, -1.0)) -> float:
    g = _check_unit(g, "final gravity")
    gh = _check_unit(nominal, "nominal gravity")
    return min(1.0, max(0.0, (float(g @ gh) + 1.0) / 2.0))


def mean_orientation(gs: np.ndarray, nominal: Sequence[float] = (0.0, 0.0, -1.0)) -> float:
    g = _check_unit(np.atleast_2d(gs), "gravity")
    gh = _check_unit(nominal, "nominal gravity")
    return min(1.0, max(0.0, (float(np.mean(g @ gh)) + 1.0) / 2.0))


def forward_velocity(speeds: np.ndarray, nominal: float) -> float:
    v = np.asarray(speeds, dtype=np.float64)
    if v.size == 0 or np.any(v < 0):
        raise ValueError("forward speeds must be a non-empty non-negative series")
    return min(float(v.mean()), nominal) / nominal


def heading_accuracy(velocities: np.ndarray, nominal: Sequence[float]) -> float:
    """Mean of ``(cos(angle) + 1) / 2`` between each planar velocity and the
    nominal one.  Near-zero velocities count as orthogonal (score 0.5)."""
    v = np.atleast_2d(np.asarray(velocities, dtype=np.float64))
    vh = np.asarray(nominal, dtype=np.float64)
    nh = np.linalg.norm(vh)
    if nh == 0:
        raise ValueError("nominal planar velocity must be non-zero")
    norms = np.linalg.norm(v, axis=1)
    moving = norms >= 1e-9
    cos = np.zeros(len(v))
    cos[moving] = (v[moving] @ vh) / (norms[moving] * nh)
    cos = np.clip(cos, -1.0, 1.0)
    return float(np.mean((cos + 1.0) / 2.0))


@dataclass(frozen=True)
class MetricSet:
    task: str
    scores: Mapping[str, float]

    def __post_init__(self) -> None:
        names = RECOVERY_METRICS if self.task == RECOVERY else GAIT_METRICS
        if self.task not in (RECOVERY, GAIT) or tuple(self.scores) != names:
            raise ValueError(f"{self.task!r} metric set must hold {names}")

    def to_dict(self) -> dict[str, Any]:
        return {"task": self.task, "scores": dict(self.scores)}


def score_episode(ep: EpisodeRecord, targets: MetricTargets, task: str) -> MetricSet:
    if task == RECOVERY:
        h_final = ep.final_height
        if h_final is None and ep.height is not None:
            h_final = float(ep.height[-1])
        g_final = ep.final_gravity
        if g_final is None and ep.gravity is not None:
            g_final = ep.gravity[-1]
        scores = {
            "s_tau": torque_metric(ep.torques, targets.max_torque),
            "s_r": recovery_speed(_need(ep.recovery_time, "T"), _need(ep.horizon, "T_hat")),
            "s_f": foot_placement(_need(ep.final_feet, "p_f"), targets),
            "s_hN": final_height(_need(h_final, "h_N"), targets.height),
            "s_phiN": final_orientation(_need(g_final, "g_N"), targets.gravity),
        }
    elif task == GAIT:
        scores = {
            "s_tau": torque_metric(ep.torques, targets.max_torque),
            "s_v": forward_velocity(_need(ep.speed, "V"), targets.speed),
            "s_psi": heading_accuracy(_need(ep.planar_velocity, "vhx/vhy"), targets.planar_velocity),
            "s_h": mean_height(_need(ep.height, "h"), targets.height),
            "s_phi": mean_orientation(_need(ep.gravity, "gx/gy/gz"), targets.gravity),
        }
    else:
        raise ValueError(f"unknown task {task!r}")
    return MetricSet(task, scores)


def overall_score(key: MetricSet, full: MetricSet) -> float:
    """Mean ratio of key-state to full-state scores; ratios may exceed 1."""
    if key.task != full.task:
        raise ValueError("metric sets come from different tasks")
    zero = [k for k, v in full.scores.items() if v <= 0]
    if zero:
        raise ZeroDivisionError(f"full-state scores {zero} are zero")
    return float(np.mean([key.scores[k] / full.scores[k] for k in full.scores]))


# -- reward terms -----------------------------------------------------------

REWARD_ALPHAS = {
    "base orientation": -2.35,
    "base height": -51.16,
    "base linear velocity": -18.42,
    "joint torque regularisation": -0.004,
    "joint velocity regularisation": -0.032,
    "symmetric foot placement": -51.16,
    "swing and stance": -460.50,
    "yaw velocity": -7.47,
}

# columns: recovery, trotting, bounding, pacing, galloping
REWARD_WEIGHTS = {
    "base orientation": (0.189, 0.068, 0.068, 0.068, 0.068),
    "base height": (0.189, 0.068, 0.068, 0.068, 0.068),
    "base linear velocity": (0.114, 0.170, 0.170, 0.170, 0.170),
    "joint torque regularisation": (0.076, 0.017, 0.017, 0.017, 0.017),
    "joint velocity regularisation": (0.076, 0.017, 0.017, 0.017, 0.017),
    "body ground contact": (0.083, 0.048, 0.048, 0.048, 0.048),
    "foot ground contact": (0.083, 0.000, 0.000, 0.000, 0.000),
    "symmetric foot placement": (0.189, 0.034, 0.034, 0.034, 0.034),
    "swing and stance": (0.000, 0.034, 0.034, 0.034, 0.034),
    "reference foot contact": (0.000, 0.476, 0.476, 0.476, 0.476),
    "yaw velocity": (0.000, 0.068, 0.068, 0.068, 0.068),
}
REWARD_TASKS = ("recovery", "trotting", "bounding", "pacing", "galloping")


def task_weights(task: str) -> dict[str, float]:
    col = REWARD_TASKS.index(task)
    return {name: w[col] for name, w in REWARD_WEIGHTS.items()}


@dataclass(frozen=True)
class RewardTerm:
    """One weighted reward term.

    Continuous terms give ``value``/``reference``/``alpha``; discrete
    contact terms give a pre-computed ``indicator`` in [0, 1] instead.
    """

    weight: float
    value: Any = None
    reference: Any = None
    alpha: float = 0.0
    indicator: float | None = None


def rbf_reward(x, x_ref, alpha: float) -> float:
    """``exp(alpha * |x_ref - x|^2)`` for scalar or vector quantities."""
    if alpha > 0:
        raise ValueError("RBF shape parameter must be non-positive")
    d = np.asarray(x_ref, dtype=np.float64) - np.asarray(x, dtype=np.float64)
    return math.exp(alpha * float(np.sum(d * d)))


def weighted_reward(terms: Sequence[RewardTerm], tol: float = 1e-3) -> float:
    total_w = math.fsum(t.weight for t in terms)
    # allowance so weights printed to 3 decimals that sum to 0.999 pass at tol=1e-3
    if abs(total_w - 1.0) > tol + 1e-12:
        raise ValueError(f"reward weights sum to {total_w}, expected 1")
    out = 0.0
    for t in terms:
        if t.indicator is not None:
            val = float(t.indicator)
        else:
            val = rbf_reward(t.value, t.reference, t.alpha)
        out += t.weight * val
    return out


# -- episode files ----------------------------------------------------------

_CHANNELS = {
    "torques": [f"tau_{i}" for i in range(12)],
    "height": ["h"],
    "gravity": ["gx", "gy", "gz"],
    "planar_velocity": ["vhx", "vhy"],
    "speed": ["V"],
}


def read_episode(csv_path: str | Path, sidecar: str | Path | None = None) -> EpisodeRecord:
    """Load an episode CSV and its JSON sidecar (default: same stem, ``.json``)."""
    csv_path = Path(csv_path)
    try:
        fh = open(csv_path, newline="", encoding="utf-8")
    except OSError as exc:
        raise FormatError(f"{csv_path}: {exc.strerror or exc}") from None
    with fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        rows = [r for r in reader if r]
    if not header:
        raise FormatError(f"{csv_path}: missing header")
    try:
        data = np.array([[float(v) for v in r] for r in rows], dtype=np.float64)
    except ValueError as exc:
        raise FormatError(f"{csv_path}: {exc}") from None
    if data.ndim != 2 or data.shape[1] != len(header) or data.shape[0] == 0:
        raise FormatError(f"{csv_path}: expected a non-empty table with {len(header)} columns")
    col = {h: j for j, h in enumerate(header)}
    fields: dict[str, Any] = {}
    for name, cols in _CHANNELS.items():
        present = [c for c in cols if c in col]
        if present and len(present) != len(cols):
            raise ChannelError(f"{csv_path}: incomplete channel group {cols}")
        if present:
            arr = data[:, [col[c] for c in cols]]
            fields[name] = arr[:, 0] if len(cols) == 1 else arr
    side_path = Path(sidecar) if sidecar is not None else csv_path.with_suffix(".json")
    side: dict[str, Any] = {}
    if side_path.exists():
        try:
            side = json.loads(side_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise FormatError(f"{side_path}: not valid JSON ({exc})") from None
    elif sidecar is not None:
        raise FormatError(f"{side_path}: sidecar not found")
    scalar_map = {
        "T": "recovery_time", "T_hat": "horizon", "h_N": "final_height",
        "p_f": "final_feet", "g_N": "final_gravity",
    }
    for key, attr in scalar_map.items():
        if key in side:
            v = side[key]
            fields[attr] = np.asarray(v, dtype=np.float64) if isinstance(v, list) else float(v)
    fields["indicators"] = {k: float(v) for k, v in side.get("indicators", {}).items()}
    return EpisodeRecord(**fields)


def load_targets(path: str | Path) -> MetricTargets:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise FormatError(f"{path}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise FormatError(f"{path}: targets must be a JSON object")
    return MetricTargets.from_dict(doc)
