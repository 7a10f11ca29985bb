"""State-vector layout and the derived input signals (contact, phase).

The layout is data: a :class:`StateSchema` names groups of state dimensions
("feedback states") and is normally read from a JSON document.  The nine
group, 64 dimension quadruped layout ships as :func:`default_schema`.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
from scipy.special import expit

from .errors import FormatError, SchemaError

FEEDBACK = "feedback"
FEEDFORWARD = "feedforward"


@dataclass(frozen=True)
class FeatureGroup:
    name: str
    dims: tuple[int, ...]
    kind: str = FEEDBACK
    range: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self) -> None:
        if not self.name:
            raise SchemaError("group name must be non-empty")
        dims = tuple(int(i) for i in self.dims)
        if not dims:
            raise SchemaError(f"group {self.name!r} has no dims")
        if self.kind not in (FEEDBACK, FEEDFORWARD):
            raise SchemaError(f"group {self.name!r}: unknown kind {self.kind!r}")
        object.__setattr__(self, "dims", dims)
        if self.range is not None:
            rng = tuple((float(lo), float(hi)) for lo, hi in self.range)
            if len(rng) != len(dims):
                raise SchemaError(
                    f"group {self.name!r}: {len(rng)} ranges for {len(dims)} dims"
                )
            for lo, hi in rng:
                if not lo < hi:
                    raise SchemaError(f"group {self.name!r}: range min {lo} not below max {hi}")
            object.__setattr__(self, "range", rng)

    @property
    def size(self) -> int:
        return len(self.dims)


@dataclass(frozen=True)
class StateSchema:
    groups: tuple[FeatureGroup, ...]
    total_dim: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "groups", tuple(self.groups))
        validate_schema(self, self.total_dim)

    @property
    def names(self) -> list[str]:
        return [g.name for g in self.groups]

    def group(self, name: str) -> FeatureGroup:
        for g in self.groups:
            if g.name == name:
                return g
        raise KeyError(f"unknown group {name!r}")

    def feedback_groups(self) -> list[FeatureGroup]:
        return [g for g in self.groups if g.kind == FEEDBACK]

    def feedforward_groups(self) -> list[FeatureGroup]:
        return [g for g in self.groups if g.kind == FEEDFORWARD]

    def dim_ranges(self) -> list[tuple[float, float] | None]:
        """Per-dimension (min, max), ``None`` where the schema gives no range."""
        out: list[tuple[float, float] | None] = [None] * self.total_dim
        for g in self.groups:
            if g.range is not None:
                for i, r in zip(g.dims, g.range):
                    out[i] = r
        return out

    def permuted(self, perm: Sequence[int]) -> "StateSchema":
        """Schema for states whose columns were reordered as ``x_new = x[perm]``."""
        inverse = np.empty(len(perm), dtype=int)
        inverse[np.asarray(perm)] = np.arange(len(perm))
        groups = [
            FeatureGroup(g.name, tuple(int(inverse[i]) for i in g.dims), g.kind, g.range)
            for g in self.groups
        ]
        return StateSchema(tuple(groups), self.total_dim)

    def to_dict(self) -> dict[str, Any]:
        groups = []
        for g in self.groups:
            entry: dict[str, Any] = {"name": g.name, "dims": list(g.dims), "kind": g.kind}
            if g.range is not None:
                entry["range"] = [list(r) for r in g.range]
            groups.append(entry)
        return {"total_dim": self.total_dim, "groups": groups}

    @classmethod
    def from_dict(cls, doc: Any) -> "StateSchema":
        if not isinstance(doc, dict) or not isinstance(doc.get("groups"), list):
            raise SchemaError('schema must be an object with a "groups" list')
        try:
            groups = tuple(
                FeatureGroup(
                    name=str(g["name"]),
                    dims=tuple(g["dims"]),
                    kind=g.get("kind", FEEDBACK),
                    range=g.get("range"),
                )
                for g in doc["groups"]
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, SchemaError):
                raise
            raise SchemaError(f"malformed group entry: {exc!r}") from None
        total = doc.get("total_dim")
        if total is None:
            total = sum(g.size for g in groups)
        return cls(groups, int(total))


def validate_schema(schema: StateSchema, n: int) -> StateSchema:
    """Check that the groups partition ``range(n)``; raise :class:`SchemaError`.

    Returns the schema unchanged when valid.
    """
    names = [g.name for g in schema.groups]
    dupes = sorted({x for x in names if names.count(x) > 1})
    if dupes:
        raise SchemaError(f"duplicate group names: {dupes}")
    if not any(g.kind == FEEDBACK for g in schema.groups):
        raise SchemaError("schema needs at least one feedback group")
    owner: dict[int, str] = {}
    for g in schema.groups:
        for i in g.dims:
            if i in owner:
                raise SchemaError(
                    f"groups {owner[i]!r} and {g.name!r} both claim dim {i}"
                )
            owner[i] = g.name
    if schema.total_dim != n:
        raise SchemaError(f"schema covers {schema.total_dim} dims but the state has {n}")
    outside = sorted(i for i in owner if not 0 <= i < n)
    if outside:
        raise SchemaError(f"dims {outside} fall outside [0, {n})")
    missing = [i for i in range(n) if i not in owner]
    if missing:
        raise SchemaError(f"dims not assigned to any group: {missing}")
    return schema


def load_schema(path: str | Path) -> StateSchema:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise FormatError(f"{path}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from None
    try:
        return StateSchema.from_dict(doc)
    except SchemaError as exc:
        raise SchemaError(f"{path}: {exc}") from None


def save_schema(schema: StateSchema, path: str | Path) -> None:
    Path(path).write_text(json.dumps(schema.to_dict(), indent=1) + "\n", encoding="utf-8")


def _packaged_schema(name: str) -> StateSchema:
    text = resources.files("state_saliency").joinpath("data", name).read_text(encoding="utf-8")
    return StateSchema.from_dict(json.loads(text))


def default_schema() -> StateSchema:
    """Nine feedback groups over 64 dims, in saliency-map order."""
    return _packaged_schema("default_schema.json")


def gait_schema() -> StateSchema:
    """The default layout plus the 2-dim feedforward phase vector (66 dims)."""
    return _packaged_schema("gait_schema.json")


# -- derived signals -------------------------------------------------------


@dataclass(frozen=True)
class ContactConfig:
    c1: float = 2.0  # 1/N
    c2: float = 2.0  # N

    def __post_init__(self) -> None:
        if not self.c1 > 0:
            raise ValueError("contact slope c1 must be positive")


@dataclass(frozen=True)
class PhaseConfig:
    period: float = 1.0  # s
    control_hz: float = 25.0

    def __post_init__(self) -> None:
        if not (self.period > 0 and self.control_hz > 0):
            raise ValueError("gait period and control frequency must be positive")
        if self.steps_per_cycle < 1:
            raise ValueError("a gait cycle must span at least one control step")

    @property
    def steps_per_cycle(self) -> float:
        return self.period * self.control_hz


def sigmoid_contact(force_norm: float | np.ndarray, cfg: ContactConfig = ContactConfig()):
    """Continuous foot contact from the contact force magnitude (N)."""
    f = np.asarray(force_norm, dtype=np.float64)
    if np.any(f < 0):
        raise ValueError("contact force norm must be non-negative")
    out = expit(cfg.c1 * (f - cfg.c2))
    return float(out) if out.ndim == 0 else out


def phase(k: float, cfg: PhaseConfig = PhaseConfig()) -> float:
    """Gait phase in [0, 1) after ``k`` control steps (no phase resetting)."""
    if k < 0:
        raise ValueError("step counter must be non-negative")
    period = cfg.steps_per_cycle
    frac = math.fmod(k, period) / period
    return 0.0 if frac >= 1.0 else frac


def phase_vector(phi: float) -> tuple[float, float]:
    if not 0.0 <= phi < 1.0:
        raise ValueError(f"phase {phi} outside [0, 1)")
    angle = 2.0 * math.pi * phi
    return math.sin(angle), math.cos(angle)


# -- trajectories ------------------------------------------------------------


@dataclass(frozen=True)
class Trajectory:
    states: np.ndarray  # (N, n)
    dt: float = 1.0 / 25.0
    aux: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        s = np.array(self.states, dtype=np.float64)
        if s.ndim != 2 or s.shape[0] < 1 or s.shape[1] < 1:
            raise FormatError(f"trajectory must be a non-empty N x n matrix, got {s.shape}")
        if not np.all(np.isfinite(s)):
            bad = np.argwhere(~np.isfinite(s))[0]
            raise FormatError(f"non-finite state at step {bad[0]}, dim {bad[1]}")
        s.setflags(write=False)
        object.__setattr__(self, "states", s)
        aux = {}
        for name, col in dict(self.aux).items():
            col = np.array(col, dtype=np.float64)
            if col.shape != (s.shape[0],):
                raise FormatError(f"aux channel {name!r} has {col.shape} values for {s.shape[0]} steps")
            col.setflags(write=False)
            aux[name] = col
        object.__setattr__(self, "aux", aux)

    @property
    def steps(self) -> int:
        return self.states.shape[0]

    @property
    def dim(self) -> int:
        return self.states.shape[1]


def format_float(v: float) -> str:
    return format(float(v), ".17g")


def write_trajectory(traj: Trajectory, path: str | Path) -> None:
    n = traj.dim
    aux_names = sorted(traj.aux)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", *(f"s{i}" for i in range(n)), *(f"aux_{a}" for a in aux_names)])
        for k, row in enumerate(traj.states):
            w.writerow(
                [format_float(k * traj.dt), *map(format_float, row),
                 *(format_float(traj.aux[a][k]) for a in aux_names)]
            )


def _parse_rows(path: Path, rows: Iterable[list[str]], ncols: int) -> np.ndarray:
    data = []
    for lineno, row in enumerate(rows, start=2):
        if not row:
            continue
        if len(row) != ncols:
            raise FormatError(f"{path}:{lineno}: expected {ncols} fields, got {len(row)}")
        try:
            data.append([float(v) for v in row])
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from None
    return np.array(data, dtype=np.float64).reshape(len(data), ncols)


def read_trajectory(path: str | Path) -> Trajectory:
    """Read ``t, s0..s{n-1}[, aux_*]`` CSV rows into a :class:`Trajectory`."""
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise FormatError(f"{path}: {exc.strerror or exc}") from None
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0].strip() != "t":
            raise FormatError(f"{path}: header must start with column 't'")
        header = [h.strip() for h in header]
        state_cols = [h for h in header[1:] if not h.startswith("aux_")]
        expected = [f"s{i}" for i in range(len(state_cols))]
        if state_cols != expected or header[1 : 1 + len(expected)] != expected:
            raise FormatError(f"{path}: state columns must be s0..s{len(state_cols) - 1} in order")
        data = _parse_rows(path, reader, len(header))
    if data.shape[0] == 0:
        raise FormatError(f"{path}: trajectory has no rows")
    t = data[:, 0]
    dt = float(np.median(np.diff(t))) if len(t) > 1 else Trajectory.dt
    aux = {h[4:]: data[:, j] for j, h in enumerate(header) if h.startswith("aux_")}
    return Trajectory(data[:, 1 : 1 + len(expected)], dt=dt, aux=aux)
