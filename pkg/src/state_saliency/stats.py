"""Correlation structure between state dims and box-plot statistics."""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .features import StateSchema, validate_schema


def pearson_abs_matrix(states: np.ndarray) -> np.ndarray:
    """|Pearson r| between every pair of columns of an ``N x n`` matrix.

    Constant columns have no defined correlation; they get 0 against every
    other column and 1 on the diagonal.
    """
    x = np.asarray(states, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("need at least two timesteps to correlate")
    xc = x - x.mean(axis=0)
    ss = np.einsum("ij,ij->j", xc, xc)
    flat = ss <= 0.0
    if np.any(flat):
        warnings.warn(
            f"constant state dims {np.flatnonzero(flat).tolist()} get zero correlation",
            RuntimeWarning,
            stacklevel=2,
        )
    norm = np.sqrt(np.where(flat, 1.0, ss))
    z = xc / norm
    r = np.abs(z.T @ z)
    r = np.minimum(r, 1.0)
    r[flat, :] = 0.0
    r[:, flat] = 0.0
    r = 0.5 * (r + r.T)
    np.fill_diagonal(r, 1.0)
    return r


def group_correlation(matrix: np.ndarray, schema: StateSchema) -> np.ndarray:
    """Mean |r| between the dims of each pair of groups, self-pairs excluded.

    A single-dim group has no pair with itself; its diagonal entry is 1.
    """
    r = np.asarray(matrix, dtype=np.float64)
    validate_schema(schema, r.shape[0])
    k = len(schema.groups)
    out = np.empty((k, k))
    for a, ga in enumerate(schema.groups):
        ia = list(ga.dims)
        for b, gb in enumerate(schema.groups[a:], start=a):
            block = r[np.ix_(ia, list(gb.dims))]
            if a == b:
                h = len(ia)
                val = (block.sum() - np.trace(block)) / (h * (h - 1)) if h > 1 else 1.0
            else:
                val = block.mean()
            out[a, b] = out[b, a] = val
    return out


@dataclass(frozen=True)
class Link:
    source: str
    target: str
    value: float


def chord_filter(
    group_matrix: np.ndarray, names: Sequence[str], threshold: float = 0.25
) -> list[Link]:
    """Off-diagonal group links at or above ``threshold``, strongest first."""
    g = np.asarray(group_matrix, dtype=np.float64)
    if g.shape != (len(names), len(names)):
        raise ValueError("group matrix and names disagree")
    links = [
        Link(names[a], names[b], float(g[a, b]))
        for a in range(len(names))
        for b in range(a + 1, len(names))
        if g[a, b] >= threshold
    ]
    return sorted(links, key=lambda ln: -ln.value)


@dataclass(frozen=True)
class BoxStats:
    median: float
    q1: float
    q3: float
    whisker_low: float
    whisker_high: float
    outliers: tuple[float, ...] = ()

    def to_dict(self) -> dict:
        d = asdict(self)
        d["outliers"] = list(self.outliers)
        return d


def box_stats(samples: Sequence[float]) -> BoxStats:
    """Quartiles by linear interpolation between order statistics; points
    more than 1.5 IQR beyond a quartile are outliers and whiskers stop at the
    most extreme remaining samples, but never inside the box."""
    x = np.sort(np.asarray(samples, dtype=np.float64))
    if x.size == 0:
        raise ValueError("box statistics need at least one sample")
    q1, med, q3 = np.percentile(x, [25, 50, 75], method="linear")
    iqr = q3 - q1
    lo, hi = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = x[(x >= lo) & (x <= hi)]
    outliers = tuple(float(v) for v in x[(x < lo) | (x > hi)])
    low, high = min(float(inside[0]), float(q1)), max(float(inside[-1]), float(q3))
    return BoxStats(float(med), float(q1), float(q3), low, high, outliers)
