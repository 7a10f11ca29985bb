"""Feed-forward policy networks: loading, evaluation and input Jacobians.

A policy is an ordered stack of dense layers ``y = act(W x + b)``.  All
arithmetic is done in float64.  The derivative of ReLU at exactly zero is
taken to be 0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .errors import ComputationError, FormatError, PolicyFormatError


class Activation(str, Enum):
    RELU = "relu"
    TANH = "tanh"
    IDENTITY = "identity"

    @property
    def piecewise_linear(self) -> bool:
        return self is not Activation.TANH

    def apply(self, z: np.ndarray) -> np.ndarray:
        if self is Activation.RELU:
            return np.maximum(z, 0.0)
        if self is Activation.TANH:
            return np.tanh(z)
        return z

    def derivative(self, z: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
        """Derivative of the activation at pre-activation ``z``.

        ``out`` may carry the already computed activation value to avoid a
        second ``tanh`` evaluation.
        """
        if self is Activation.RELU:
            return (z > 0.0).astype(np.float64)
        if self is Activation.TANH:
            t = np.tanh(z) if out is None else out
            return 1.0 - t * t
        return np.ones_like(z, dtype=np.float64)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class LayerSpec:
    weights: np.ndarray  # (out_dim, in_dim)
    biases: np.ndarray  # (out_dim,)
    activation: Activation = Activation.IDENTITY

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=np.float64)
        b = np.asarray(self.biases, dtype=np.float64)
        if w.ndim != 2:
            raise PolicyFormatError(f"weights must be a matrix, got shape {w.shape}")
        if b.ndim != 1 or b.shape[0] != w.shape[0]:
            raise PolicyFormatError(
                f"biases length {b.shape} does not match weight rows {w.shape[0]}"
            )
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise PolicyFormatError("non-finite weight or bias entry")
        object.__setattr__(self, "weights", _frozen(w))
        object.__setattr__(self, "biases", _frozen(b))
        object.__setattr__(self, "activation", Activation(self.activation))

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class MlpPolicy:
    """Immutable stack of dense layers.

    ``action_mask`` selects the outputs that count as actions.  When absent,
    :meth:`resolve_mask` falls back to the first half of the outputs for an
    even output width (mean head of a Gaussian policy) and to all outputs
    otherwise.
    """

    layers: tuple[LayerSpec, ...]
    action_mask: tuple[int, ...] | None = field(default=None)

    def __post_init__(self) -> None:
        layers = tuple(self.layers)
        if not layers:
            raise PolicyFormatError("policy has no layers")
        for k in range(1, len(layers)):
            if layers[k].in_dim != layers[k - 1].out_dim:
                raise PolicyFormatError(
                    f"input width {layers[k].in_dim} does not chain with "
                    f"previous output width {layers[k - 1].out_dim}",
                    layer=k,
                )
        object.__setattr__(self, "layers", layers)
        if self.action_mask is not None:
            mask = tuple(int(j) for j in self.action_mask)
            if not mask:
                raise PolicyFormatError("action_mask must not be empty")
            out = layers[-1].out_dim
            bad = [j for j in mask if not 0 <= j < out]
            if bad:
                raise PolicyFormatError(f"action_mask indices {bad} outside [0, {out})")
            object.__setattr__(self, "action_mask", mask)

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim

    def resolve_mask(self, mask: Sequence[int] | None = None) -> np.ndarray:
        if mask is None:
            mask = self.action_mask
        if mask is None:
            m = self.output_dim
            mask = range(m // 2) if m % 2 == 0 else range(m)
        idx = np.asarray(list(mask), dtype=np.intp)
        if idx.size == 0 or idx.min() < 0 or idx.max() >= self.output_dim:
            raise ValueError(f"output mask {idx.tolist()} invalid for {self.output_dim} outputs")
        return idx


def _check_input(policy: MlpPolicy, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1:] != (policy.input_dim,) or x.ndim > 2:
        raise ValueError(f"expected input of length {policy.input_dim}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("input contains non-finite entries")
    return x


def forward(policy: MlpPolicy, x: np.ndarray) -> np.ndarray:
    """Evaluate the full network output for one state (1-D) or a batch (rows)."""
    h = _check_input(policy, x)
    for layer in policy.layers:
        h = layer.activation.apply(h @ layer.weights.T + layer.biases)
    return h


def input_jacobian(
    policy: MlpPolicy, x: np.ndarray, mask: Sequence[int] | None = None
) -> np.ndarray:
    """Jacobian of the (masked) outputs with respect to the input at ``x``.

    Reverse accumulation: one forward pass stores the activation
    derivatives, then every requested output row is swept back through the
    layers at once.
    """
    x = _check_input(policy, x)
    if x.ndim != 1:
        raise ValueError("input_jacobian takes a single state vector")
    h = x
    derivs = []
    for layer in policy.layers:
        z = h @ layer.weights.T + layer.biases
        h = layer.activation.apply(z)
        derivs.append(layer.activation.derivative(z, h))
    rows = np.arange(policy.output_dim) if mask is None else policy.resolve_mask(mask)
    last = policy.layers[-1]
    r = derivs[-1][rows, None] * last.weights[rows]
    for layer, d in zip(policy.layers[-2::-1], derivs[-2::-1]):
        r = (r * d) @ layer.weights
    if not np.all(np.isfinite(r)):
        raise ComputationError("non-finite gradient")
    return r


# -- serialisation ---------------------------------------------------------


def policy_to_dict(policy: MlpPolicy) -> dict[str, Any]:
    doc: dict[str, Any] = {
        "layers": [
            {
                "weights": layer.weights.tolist(),
                "biases": layer.biases.tolist(),
                "activation": layer.activation.value,
            }
            for layer in policy.layers
        ]
    }
    if policy.action_mask is not None:
        doc["action_mask"] = list(policy.action_mask)
    return doc


def policy_from_dict(doc: Any) -> MlpPolicy:
    if not isinstance(doc, dict) or not isinstance(doc.get("layers"), list):
        raise PolicyFormatError('expected an object with a "layers" list')
    layers = []
    for k, entry in enumerate(doc["layers"]):
        if not isinstance(entry, dict):
            raise PolicyFormatError("layer entry must be an object", layer=k)
        try:
            act = Activation(str(entry.get("activation", "")).lower())
        except ValueError:
            raise PolicyFormatError(
                f"unknown activation {entry.get('activation')!r}", layer=k
            ) from None
        try:
            w = np.array(entry["weights"], dtype=np.float64)
            b = np.array(entry["biases"], dtype=np.float64)
        except KeyError as exc:
            raise PolicyFormatError(f"missing field {exc.args[0]!r}", layer=k) from None
        except (TypeError, ValueError):
            raise PolicyFormatError("ragged or non-numeric weights/biases", layer=k) from None
        if w.ndim == 2 and w.shape[0] == 0:
            raise PolicyFormatError("layer has no units", layer=k)
        try:
            layers.append(LayerSpec(w, b, act))
        except PolicyFormatError as exc:
            raise PolicyFormatError(str(exc), layer=k) from None
    mask = doc.get("action_mask")
    if mask is not None and not (
        isinstance(mask, list) and all(isinstance(j, int) and not isinstance(j, bool) for j in mask)
    ):
        raise PolicyFormatError("action_mask must be a list of integers")
    return MlpPolicy(tuple(layers), None if mask is None else tuple(mask))


def dumps_policy(policy: MlpPolicy) -> str:
    return json.dumps(policy_to_dict(policy), separators=(",", ":"))


def save_policy(policy: MlpPolicy, path: str | Path) -> None:
    Path(path).write_text(dumps_policy(policy) + "\n", encoding="utf-8")


def load_policy(path: str | Path) -> MlpPolicy:
    """Read a policy weight file (JSON) and validate every invariant."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise FormatError(f"{path}: {exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise PolicyFormatError(f"{path}: not valid JSON ({exc})") from None
    return policy_from_dict(doc)
