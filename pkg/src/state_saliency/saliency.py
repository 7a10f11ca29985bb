"""Integrated-gradients saliency over trajectories and importance rankings.

Pipeline for one trajectory of ``N`` states of width ``n``:

1. ``G[t, i]`` -- integrated gradients of the masked actions for every state,
   reduced over outputs by summing absolute values.
2. ``eps`` -- the mean of ``G`` over *all* timesteps and dims.
3. ``S_d = G - eps`` where ``G > eps``, else 0.
4. ``S = S_d / max(S_d)`` (all zero when ``S_d`` is all zero).

Importances are then column sums of ``S`` (per dim), averaged (or maxed)
within each schema group, and finally shared out so they sum to one.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .errors import ComputationError, FormatError, SchemaError
from .features import FEEDFORWARD, StateSchema, Trajectory, format_float, validate_schema
from .mlp import MlpPolicy
from .pathsum import path_gradient_sum
from .stats import BoxStats, box_stats


@dataclass(frozen=True)
class IgConfig:
    steps: int = 25
    baseline: np.ndarray | None = None  # None means the all-zero state
    mask: tuple[int, ...] | None = None
    method: str = "auto"

    def __post_init__(self) -> None:
        if int(self.steps) < 1:
            raise ValueError("Riemann step count must be at least 1")
        object.__setattr__(self, "steps", int(self.steps))
        if self.baseline is not None:
            b = np.array(self.baseline, dtype=np.float64)
            if b.ndim != 1 or not np.all(np.isfinite(b)):
                raise ValueError("baseline must be a finite vector")
            b.setflags(write=False)
            object.__setattr__(self, "baseline", b)
        if self.mask is not None:
            object.__setattr__(self, "mask", tuple(int(j) for j in self.mask))

    def baseline_for(self, n: int) -> np.ndarray:
        if self.baseline is None:
            return np.zeros(n)
        if self.baseline.shape != (n,):
            raise ValueError(f"baseline has length {self.baseline.size}, policy expects {n}")
        return self.baseline


class Attribution(NamedTuple):
    total: np.ndarray  # (n,) sum over outputs of |signed|
    signed: np.ndarray  # (|mask|, n) per-output attributions before abs
    outputs: np.ndarray  # output indices the rows of ``signed`` refer to


def integrated_gradients(policy: MlpPolicy, x: np.ndarray, cfg: IgConfig = IgConfig()) -> Attribution:
    x = np.asarray(x, dtype=np.float64)
    n = policy.input_dim
    if x.shape != (n,):
        raise ValueError(f"state has shape {x.shape}, policy expects ({n},)")
    if not np.all(np.isfinite(x)):
        raise ValueError("state contains non-finite entries")
    base = cfg.baseline_for(n)
    rows = policy.resolve_mask(cfg.mask)
    grad_sum = path_gradient_sum(policy, base, x, cfg.steps, rows, cfg.method)
    signed = (x - base)[None, :] / cfg.steps * grad_sum
    return Attribution(np.abs(signed).sum(axis=0), signed, rows)


# -- saliency maps -----------------------------------------------------------


@dataclass(frozen=True)
class SaliencyMap:
    raw: np.ndarray
    epsilon: float
    thresholded: np.ndarray
    normalized: np.ndarray
    meta: Mapping[str, Any] = field(default_factory=dict)

    @classmethod
    def from_raw(cls, raw: np.ndarray, meta: Mapping[str, Any] | None = None) -> "SaliencyMap":
        """Threshold and normalise a raw attribution matrix ``G`` (N x n)."""
        g = np.array(raw, dtype=np.float64)
        if g.ndim != 2 or g.size == 0:
            raise ValueError(f"raw saliency must be a non-empty matrix, got shape {g.shape}")
        if np.any(g < 0) or not np.all(np.isfinite(g)):
            raise ValueError("raw saliency must be finite and non-negative")
        eps = float(g.mean())
        sd = np.where(g > eps, g - eps, 0.0)
        peak = sd.max()
        s = sd / peak if peak > 0 else np.zeros_like(sd)
        for a in (g, sd, s):
            a.setflags(write=False)
        return cls(g, eps, sd, s, dict(meta or {}))

    @property
    def shape(self) -> tuple[int, int]:
        return self.normalized.shape


def _thread_count() -> int:
    env = os.environ.get("SALIENCY_THREADS", "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError(f"SALIENCY_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def saliency_pipeline(
    policy: MlpPolicy, trajectory: Trajectory | np.ndarray, cfg: IgConfig = IgConfig()
) -> SaliencyMap:
    states = trajectory.states if isinstance(trajectory, Trajectory) else np.asarray(trajectory, dtype=np.float64)
    if states.ndim != 2 or states.shape[0] == 0:
        raise ValueError("trajectory is empty")
    if states.shape[1] != policy.input_dim:
        raise ValueError(
            f"trajectory rows have {states.shape[1]} dims, policy expects {policy.input_dim}"
        )

    def one(t: int) -> np.ndarray:
        return integrated_gradients(policy, states[t], cfg).total

    threads = min(_thread_count(), states.shape[0])
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(one, range(states.shape[0])))
    else:
        rows = [one(t) for t in range(states.shape[0])]
    meta = {
        "p": cfg.steps,
        "baseline": cfg.baseline_for(policy.input_dim).tolist(),
        "mask": policy.resolve_mask(cfg.mask).tolist(),
    }
    return SaliencyMap.from_raw(np.vstack(rows), meta)


def write_saliency(smap: SaliencyMap, csv_path: str | Path, json_path: str | Path | None = None) -> None:
    """Normalised ``S`` as CSV (header ``s0..``) plus a JSON sidecar."""
    write_matrix_csv(smap.normalized, csv_path, [f"s{i}" for i in range(smap.shape[1])])
    if json_path is not None:
        side = {"epsilon": smap.epsilon, **smap.meta}
        Path(json_path).write_text(json.dumps(side, sort_keys=True) + "\n", encoding="utf-8")


def write_matrix_csv(matrix: np.ndarray, path: str | Path, header: Sequence[str] | None = None) -> None:
    lines = []
    if header is not None:
        lines.append(",".join(header))
    lines.extend(",".join(format_float(v) for v in row) for row in np.atleast_2d(matrix))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_matrix_csv(path: str | Path) -> tuple[np.ndarray, list[str] | None]:
    """Read a numeric CSV matrix with an optional non-numeric header row."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise FormatError(f"{path}: {exc.strerror or exc}") from None
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise FormatError(f"{path}: empty matrix file")
    header = None
    first = [c.strip() for c in lines[0].split(",")]
    try:
        [float(c) for c in first]
    except ValueError:
        header = first
        lines = lines[1:]
    rows = []
    for k, ln in enumerate(lines):
        try:
            rows.append([float(c) for c in ln.split(",")])
        except ValueError as exc:
            raise FormatError(f"{path}: row {k + 1}: {exc}") from None
    widths = {len(r) for r in rows}
    if len(widths) > 1 or (header is not None and rows and widths != {len(header)}):
        raise FormatError(f"{path}: ragged matrix (row widths {sorted(widths)})")
    if not rows:
        raise FormatError(f"{path}: matrix has no rows")
    return np.array(rows, dtype=np.float64), header


# -- importance --------------------------------------------------------------


@dataclass(frozen=True)
class GroupImportance:
    name: str
    importance: float
    relative: float


@dataclass(frozen=True)
class ImportanceReport:
    method: str
    per_dim: np.ndarray
    groups: tuple[GroupImportance, ...]

    def relative(self) -> dict[str, float]:
        return {g.name: g.relative for g in self.groups}

    def ranking(self) -> list[GroupImportance]:
        """Groups by descending relative importance; ties keep schema order."""
        return sorted(self.groups, key=lambda g: -g.relative)

    def to_dict(self) -> dict[str, Any]:
        return {
            "method": self.method,
            "per_dim": self.per_dim.tolist(),
            "groups": [{"name": g.name, "I": g.importance, "r": g.relative} for g in self.groups],
        }

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "ImportanceReport":
        try:
            groups = tuple(GroupImportance(str(g["name"]), float(g["I"]), float(g["r"])) for g in doc["groups"])
            return cls(str(doc["method"]), np.asarray(doc["per_dim"], dtype=np.float64), groups)
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"malformed importance report: {exc!r}") from None


def dimension_importance(smap: SaliencyMap) -> np.ndarray:
    return smap.normalized.sum(axis=0)


def group_importance(
    per_dim: np.ndarray,
    schema: StateSchema,
    method: str = "mean",
    smap: SaliencyMap | None = None,
) -> dict[str, float]:
    """Importance ``I_o`` of every schema group.

    ``mean`` averages the per-dim importances of the group's dims; ``max``
    takes the peak normalised saliency over all timesteps and the group's
    dims (``smap`` required).
    """
    per_dim = np.asarray(per_dim, dtype=np.float64)
    validate_schema(schema, per_dim.size)
    out: dict[str, float] = {}
    for g in schema.groups:
        idx = list(g.dims)
        if method == "mean":
            out[g.name] = float(per_dim[idx].mean())
        elif method == "max":
            if smap is None:
                raise ValueError("max method needs the saliency map")
            out[g.name] = float(smap.normalized[:, idx].max())
        else:
            raise ValueError(f"unknown importance method {method!r}")
    return out


def relative_importance(
    importance: Mapping[str, float],
    include: Iterable[str] | None = None,
) -> dict[str, float]:
    """Shares ``r_o = I_o / sum(I)`` over the included groups."""
    names = list(importance) if include is None else list(include)
    if not names:
        raise ValueError("no groups included")
    unknown = [n for n in names if n not in importance]
    if unknown:
        raise KeyError(f"unknown groups {unknown}")
    vals = np.array([importance[n] for n in names], dtype=np.float64)
    if np.any(vals < 0):
        raise ValueError("importances must be non-negative")
    total = vals.sum()
    if not total > 0:
        raise ComputationError("all included group importances are zero; relative importance undefined")
    return {n: float(v / total) for n, v in zip(names, vals)}


def importance_report(
    smap: SaliencyMap,
    schema: StateSchema,
    method: str = "mean",
    include_feedforward: bool = False,
) -> ImportanceReport:
    per_dim = dimension_importance(smap)
    imp = group_importance(per_dim, schema, method, smap)
    included = [g.name for g in schema.groups if include_feedforward or g.kind != FEEDFORWARD]
    rel = relative_importance(imp, included)
    groups = tuple(GroupImportance(n, imp[n], rel[n]) for n in included)
    return ImportanceReport(method, per_dim, groups)


def feedforward_share(smap: SaliencyMap, schema: StateSchema, method: str = "mean") -> tuple[float, float]:
    """Summed relative importance of (feedforward, feedback) groups, all groups counted."""
    ff = {g.name for g in schema.feedforward_groups()}
    if not ff:
        raise SchemaError("schema has no feedforward group")
    rel = relative_importance(group_importance(dimension_importance(smap), schema, method, smap))
    ff_share = sum(v for k, v in rel.items() if k in ff)
    fb_share = sum(v for k, v in rel.items() if k not in ff)
    return ff_share, fb_share


# -- sensor-noise sensitivity -------------------------------------------------


def noise_per_dim(noise: Mapping[str, Any], schema: StateSchema) -> np.ndarray:
    """Per-dim sensor noise std from ``{"sigma": {group: s}}`` or ``{"per_dim": [...]}``."""
    if "per_dim" in noise:
        sigma = np.asarray(noise["per_dim"], dtype=np.float64)
        if sigma.shape != (schema.total_dim,):
            raise FormatError(f"per_dim noise has {sigma.size} entries, schema has {schema.total_dim}")
    elif "sigma" in noise:
        sigma = np.zeros(schema.total_dim)
        for name, s in noise["sigma"].items():
            try:
                g = schema.group(name)
            except KeyError:
                raise FormatError(f"noise names unknown group {name!r}") from None
            sigma[list(g.dims)] = s
    else:
        raise FormatError('noise spec needs a "sigma" or "per_dim" entry')
    if np.any(sigma < 0) or not np.all(np.isfinite(sigma)):
        raise FormatError("sensor noise std must be finite and non-negative")
    return sigma


def compose_sensitivity(
    saliency: SaliencyMap | np.ndarray, sigma: np.ndarray, schema: StateSchema
) -> np.ndarray:
    """Element-wise product of the saliency map and the per-dim noise ratio
    ``sigma / (s_max - s_min)``."""
    s = saliency.normalized if isinstance(saliency, SaliencyMap) else np.asarray(saliency, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    if s.ndim != 2 or s.shape[1] != schema.total_dim or sigma.shape != (schema.total_dim,):
        raise ValueError("saliency, noise and schema widths disagree")
    ratio = np.zeros(schema.total_dim)
    ranges = schema.dim_ranges()
    missing = []
    for i, sd in enumerate(sigma):
        if sd == 0:
            continue
        if ranges[i] is None:
            missing.append(i)
            continue
        lo, hi = ranges[i]
        if not hi > lo:
            raise SchemaError(f"dim {i} has a zero-width range")
        ratio[i] = sd / (hi - lo)
    if missing:
        raise SchemaError(f"noisy dims without a schema range: {missing}")
    return s * ratio[None, :]


# -- trials ----------------------------------------------------------------


def aggregate_trials(reports: Sequence[ImportanceReport]) -> dict[str, BoxStats]:
    """Box statistics of each group's relative importance across trials."""
    if not reports:
        raise ValueError("need at least one report")
    names = [g.name for g in reports[0].groups]
    for rep in reports[1:]:
        if [g.name for g in rep.groups] != names:
            raise ValueError("reports cover different group sets")
    return {name: box_stats([rep.relative()[name] for rep in reports]) for name in names}
