"""Linear and MLP scoring models with hand-written reverse-mode gradients.

The score ``f(x)`` is the pre-sigmoid logit; the sigmoid lives inside the
cross-entropy loss so that ``f(x) > 0`` is exactly ``sigmoid(f(x)) > 0.5``.
Parameters are one flat vector, laid out layer by layer as the row-major
weight matrix (fan_in x fan_out) followed by the bias.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .data import Dataset


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    input_dim: int
    hidden: tuple[int, ...] = (60, 25)
    dropout: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("linear", "mlp"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.input_dim < 1:
            raise ValueError("input_dim must be positive")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.kind == "mlp":
            if not self.hidden or any(h < 1 for h in self.hidden):
                raise ValueError("hidden sizes must be positive")
            if not 0.0 <= self.dropout < 1.0:
                raise ValueError("dropout must lie in [0, 1)")

    @property
    def layer_sizes(self) -> list[int]:
        if self.kind == "linear":
            return [self.input_dim, 1]
        return [self.input_dim, *self.hidden, 1]

    @property
    def n_params(self) -> int:
        sizes = self.layer_sizes
        return sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "input_dim": self.input_dim,
            "hidden": list(self.hidden),
            "dropout": self.dropout,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, raw: Mapping) -> "ModelSpec":
        return cls(
            kind=raw["kind"],
            input_dim=int(raw["input_dim"]),
            hidden=tuple(raw.get("hidden", (60, 25))),
            dropout=float(raw.get("dropout", 0.2)),
            seed=int(raw.get("seed", 0)),
        )


@dataclass(frozen=True)
class Model:
    spec: ModelSpec
    params: np.ndarray

    def __post_init__(self):
        params = np.array(self.params, dtype=float)
        if params.shape != (self.spec.n_params,):
            raise ValueError(f"expected {self.spec.n_params} parameters, got {params.shape}")
        if not np.all(np.isfinite(params)):
            raise ValueError("parameters must be finite")
        params.setflags(write=False)
        object.__setattr__(self, "params", params)

    def layers(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """Views of (weight, bias) per layer into the flat vector."""
        out, pos = [], 0
        sizes = self.spec.layer_sizes
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            w = self.params[pos : pos + fan_in * fan_out].reshape(fan_in, fan_out)
            pos += fan_in * fan_out
            b = self.params[pos : pos + fan_out]
            pos += fan_out
            out.append((w, b))
        return out

    def with_params(self, params: np.ndarray) -> "Model":
        return Model(self.spec, params)

    def to_dict(self) -> dict:
        return {"spec": self.spec.to_dict(), "params": [float(p) for p in self.params]}

    @classmethod
    def from_dict(cls, raw: Mapping) -> "Model":
        return cls(ModelSpec.from_dict(raw["spec"]), np.asarray(raw["params"], dtype=float))

    def save(self, path: str | Path) -> None:
        # json writes floats with repr, which round-trips float64
        Path(path).write_text(json.dumps(self.to_dict()), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Model":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def init_model(spec: ModelSpec, seed: int | None = None) -> Model:
    """Zero weights for the linear scorer; Glorot-uniform weights and zero
    biases for the MLP."""
    if spec.kind == "linear":
        return Model(spec, np.zeros(spec.n_params))
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    chunks = []
    sizes = spec.layer_sizes
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        chunks.append(rng.uniform(-bound, bound, size=fan_in * fan_out))
        chunks.append(np.zeros(fan_out))
    return Model(spec, np.concatenate(chunks))


@dataclass(frozen=True)
class Batch:
    """Rows handed to objectives: design matrix, ±1 labels, ±1 group columns."""

    x: np.ndarray
    y: np.ndarray
    sensitive: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __len__(self) -> int:
        return self.x.shape[0]

    @classmethod
    def from_dataset(cls, dataset: Dataset, include_sensitive: bool = True) -> "Batch":
        return cls(dataset.design_matrix(include_sensitive), dataset.labels, dict(dataset.sensitive))

    def take(self, indices: np.ndarray) -> "Batch":
        return Batch(self.x[indices], self.y[indices], {k: v[indices] for k, v in self.sensitive.items()})


def draw_masks(spec: ModelSpec, n_rows: int, rng: np.random.Generator) -> list[np.ndarray] | None:
    """Bernoulli keep-masks (keep probability ``1 - dropout``), one per hidden layer."""
    if spec.kind == "linear" or spec.dropout == 0.0:
        return None
    keep = 1.0 - spec.dropout
    return [(rng.random((n_rows, h)) < keep).astype(float) for h in spec.hidden]


@dataclass
class _Cache:
    inputs: list[np.ndarray]
    pre: list[np.ndarray]
    masks: list[np.ndarray] | None


def _check_finite(values: np.ndarray, layer: int) -> None:
    if not np.all(np.isfinite(values)):
        raise FloatingPointError(f"non-finite values in layer {layer}")


def forward(model: Model, x: np.ndarray, masks: Sequence[np.ndarray] | None = None) -> np.ndarray:
    """Scores ``f(x)`` for a row vector or a matrix of rows.

    ``masks=None`` is eval mode: hidden activations are scaled by the keep
    probability instead of being dropped. Passing masks (see
    :func:`draw_masks`) is train mode.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return _forward(model, x[None, :], masks)[0][0]
    return _forward(model, x, masks)[0]


def _forward(model: Model, x: np.ndarray, masks) -> tuple[np.ndarray, _Cache]:
    spec = model.spec
    if x.shape[1] != spec.input_dim:
        raise ValueError(f"expected {spec.input_dim} features, got {x.shape[1]}")
    layers = model.layers()
    cache = _Cache(inputs=[], pre=[], masks=list(masks) if masks is not None else None)
    h = x
    for i, (w, b) in enumerate(layers):
        cache.inputs.append(h)
        z = h @ w + b
        _check_finite(z, i)
        if i == len(layers) - 1:
            return z[:, 0], cache
        cache.pre.append(z)
        h = np.maximum(z, 0.0)
        if masks is not None:
            h = h * masks[i]
        elif spec.dropout:
            h = h * (1.0 - spec.dropout)
    raise AssertionError("unreachable")


def _backward(model: Model, cache: _Cache, dscores: np.ndarray) -> np.ndarray:
    spec = model.spec
    layers = model.layers()
    grads: list[np.ndarray] = []
    delta = dscores[:, None]
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        h = cache.inputs[i]
        grads.append(delta.sum(axis=0))
        grads.append((h.T @ delta).ravel())
        _check_finite(grads[-1], i)
        if i == 0:
            break
        dh = delta @ w.T
        if cache.masks is not None:
            dh = dh * cache.masks[i - 1]
        elif spec.dropout:
            dh = dh * (1.0 - spec.dropout)
        delta = dh * (cache.pre[i - 1] > 0)
    return np.concatenate(grads[::-1])


def predict(model: Model, x: np.ndarray) -> np.ndarray:
    """``+1`` where the eval-mode score is strictly positive, else ``-1``."""
    return np.where(forward(model, x) > 0, 1.0, -1.0)


def sigmoid(z: np.ndarray) -> np.ndarray:
    return np.exp(-np.logaddexp(0.0, -z))


def bce_from_scores(scores: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy of logits against ±1 labels, and its gradient
    with respect to each score."""
    n = scores.shape[0]
    if n == 0:
        raise ValueError("binary cross-entropy of an empty batch")
    target = (y + 1.0) / 2.0
    # softplus(f) - t*f == -[t log s(f) + (1-t) log(1-s(f))]
    value = float(np.mean(np.logaddexp(0.0, scores) - target * scores))
    return value, (sigmoid(scores) - target) / n


def bce_loss(model: Model, batch: Batch, masks=None) -> float:
    return bce_from_scores(forward(model, batch.x, masks), batch.y)[0]


# (scores, batch) -> (value, d value / d scores)
ScoreObjective = Callable[[np.ndarray, Batch], tuple[float, np.ndarray]]


def grad(model: Model, objective: ScoreObjective, batch: Batch, masks=None) -> tuple[float, np.ndarray]:
    """Loss value and exact gradient with respect to the flat parameters.

    The same ``masks`` drive the forward and the backward pass.
    """
    scores, cache = _forward(model, np.asarray(batch.x, dtype=float), masks)
    value, dscores = objective(scores, batch)
    return value, _backward(model, cache, np.asarray(dscores, dtype=float))


def error_rate(model: Model, batch: Batch) -> float:
    return float(np.mean(predict(model, batch.x) != batch.y))


@dataclass(frozen=True)
class BCEObjective:
    """The performance objective."""

    name: str = "bce"

    def __call__(self, scores: np.ndarray, batch: Batch) -> tuple[float, np.ndarray]:
        return bce_from_scores(scores, batch.y)
