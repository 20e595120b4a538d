"""Exact statistical-parity fairness measures and their smooth relaxations.

Every measure is the difference of a (relaxed) positive- or negative-
prediction rate between group ``-1`` and group ``+1``, taken over the rows
relevant to the notion. All relaxation kinds share one weighted-sum path:
each relevant row carries weight ``+1/N(-1)`` or ``-1/N(+1)``, so the signed
value is ``sum_i w_i * r(f_i)`` for the kind's surrogate ``r``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Dataset
from .model import Batch, bce_from_scores, forward

RELAXATIONS = ("indicator", "linear", "convex-concave", "htr")
NOTIONS = ("ddp", "deo", "fpr", "fnr", "tpr", "tnr")

# notion -> (label the rate is conditioned on, or None; rate counts positive predictions?)
_NOTION_RULES = {
    "ddp": (None, True),
    "deo": (1.0, True),
    "tpr": (1.0, True),
    "fnr": (1.0, False),
    "fpr": (-1.0, True),
    "tnr": (-1.0, False),
}


class DegenerateGroupError(ValueError):
    """A group has no rows to average over for the requested notion."""


@dataclass(frozen=True)
class Relaxation:
    kind: str = "htr"
    c: float = 2.0
    normalization: str = "group"

    def __post_init__(self):
        if self.kind not in RELAXATIONS:
            raise ValueError(f"unknown relaxation {self.kind!r}; expected one of {RELAXATIONS}")
        if not self.c > 0:
            raise ValueError("c must be positive")
        if self.normalization not in ("group", "global"):
            raise ValueError("normalization must be 'group' or 'global'")


@dataclass(frozen=True)
class FairnessNotion:
    kind: str
    attribute: str

    def __post_init__(self):
        object.__setattr__(self, "kind", self.kind.lower())
        if self.kind not in NOTIONS:
            raise ValueError(f"unknown fairness notion {self.kind!r}; expected one of {NOTIONS}")

    @property
    def label(self) -> str:
        return f"{self.kind}[{self.attribute}]"


@dataclass(frozen=True)
class FairnessValue:
    signed: float
    absolute: float
    rates: dict


def relax_pos(relaxation: Relaxation, x):
    """Surrogate for ``1[x > 0]``."""
    x = np.asarray(x, dtype=float)
    kind = relaxation.kind
    if kind == "indicator":
        return (x > 0).astype(float)
    if kind == "linear":
        return x
    if kind == "convex-concave":
        return np.minimum(0.0, x)
    return np.tanh(relaxation.c * np.maximum(0.0, x))


def relax_neg(relaxation: Relaxation, x):
    """Surrogate for ``1[x < 0]``; the mirror image of :func:`relax_pos`."""
    x = np.asarray(x, dtype=float)
    if relaxation.kind == "indicator":
        return (x < 0).astype(float)
    return relax_pos(relaxation, -x)


def relax_pos_grad(relaxation: Relaxation, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    kind = relaxation.kind
    if kind == "indicator":
        return np.zeros_like(x)
    if kind == "linear":
        return np.ones_like(x)
    if kind == "convex-concave":
        return (x < 0).astype(float)
    c = relaxation.c
    t = np.tanh(c * np.maximum(0.0, x))
    return np.where(x > 0, c * (1.0 - t * t), 0.0)


def relax_neg_grad(relaxation: Relaxation, x) -> np.ndarray:
    return -relax_pos_grad(relaxation, -np.asarray(x, dtype=float))


def _weights(labels, groups, notion: FairnessNotion, normalization: str) -> tuple[np.ndarray, bool]:
    """Per-row weights of the signed measure and whether rates count positives."""
    condition, positive = _NOTION_RULES[notion.kind]
    labels = np.asarray(labels, dtype=float)
    groups = np.asarray(groups, dtype=float)
    relevant = np.ones_like(groups, dtype=bool) if condition is None else labels == condition
    w = np.zeros_like(groups, dtype=float)
    for g, sign in ((-1.0, 1.0), (1.0, -1.0)):
        member = relevant & (groups == g)
        count = int(member.sum())
        if count == 0:
            raise DegenerateGroupError(f"group {int(g):+d} has no rows for notion {notion.label}")
        denom = count if normalization == "group" else len(groups)
        w[member] = sign / denom
    return w, positive


def _group_rates(r: np.ndarray, w: np.ndarray) -> dict[int, np.ndarray]:
    """Rates over the last axis of ``r``; sums are divided afterwards so
    indicator rates are exact count ratios."""
    out = {}
    for g, member in ((-1, w > 0), (1, w < 0)):
        denom = round(1.0 / abs(w[member][0]))
        out[g] = r[..., member].sum(axis=-1) / denom
    return out


def fairness_value(scores, labels, groups, notion: FairnessNotion, relaxation: Relaxation) -> FairnessValue:
    """Signed rate difference ``rate(group -1) - rate(group +1)`` for ``notion``.

    Under ``group`` normalization each rate is the mean over the group's
    relevant rows; under ``global`` both sums are divided by the total row
    count instead.
    """
    scores = np.asarray(scores, dtype=float)
    w, positive = _weights(labels, groups, notion, relaxation.normalization)
    r = relax_pos(relaxation, scores) if positive else relax_neg(relaxation, scores)
    rates = {g: float(v) for g, v in _group_rates(r, w).items()}
    signed = rates[-1] - rates[1]
    return FairnessValue(signed=signed, absolute=abs(signed), rates=rates)


def true_fairness(scores, labels, groups, notion: FairnessNotion) -> float:
    """Absolute value of the exact (indicator, group-normalized) measure."""
    return fairness_value(scores, labels, groups, notion, Relaxation("indicator")).absolute


@dataclass(frozen=True)
class FairnessObjective:
    """``|relaxed measure| + lam * BCE``, the smooth fairness objective.

    At a signed value of exactly zero the subgradient 0 is used for the
    absolute value.
    """

    notion: FairnessNotion
    relaxation: Relaxation = Relaxation()
    lam: float = 0.1

    def __post_init__(self):
        if self.relaxation.kind == "indicator":
            raise ValueError("the indicator relaxation is not differentiable and cannot be trained on")
        if self.lam < 0:
            raise ValueError("lam must be non-negative")

    @property
    def name(self) -> str:
        prefix = {"htr": "htr", "linear": "lin", "convex-concave": "ccr"}[self.relaxation.kind]
        return f"{prefix}_{self.notion.label}"

    def __call__(self, scores: np.ndarray, batch: Batch) -> tuple[float, np.ndarray]:
        groups = batch.sensitive[self.notion.attribute]
        w, positive = _weights(batch.y, groups, self.notion, self.relaxation.normalization)
        if positive:
            r, dr = relax_pos(self.relaxation, scores), relax_pos_grad(self.relaxation, scores)
        else:
            r, dr = relax_neg(self.relaxation, scores), relax_neg_grad(self.relaxation, scores)
        signed = float(np.dot(w, r))
        value = abs(signed)
        dscores = np.sign(signed) * w * dr
        if self.lam:
            bce, dbce = bce_from_scores(scores, batch.y)
            value += self.lam * bce
            dscores = dscores + self.lam * dbce
        return value, dscores


def fairness_loss(model, batch: Batch, notion: FairnessNotion, relaxation: Relaxation, lam: float, masks=None) -> float:
    return FairnessObjective(notion, relaxation, lam)(forward(model, batch.x, masks), batch)[0]


def landscape_grid(
    dataset: Dataset,
    relaxation: Relaxation,
    notion: FairnessNotion,
    a0_range: tuple[float, float],
    a1_range: tuple[float, float],
    resolution: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """|fairness| of every linear classifier ``f(x) = -x2 + a1*x1 + a0`` on a grid.

    Returns ``(a0_values, a1_values, grid)`` where ``grid[i, j]`` belongs to
    ``(a0_values[i], a1_values[j])`` and is divided by the grid maximum (an
    all-zero grid stays zero).
    """
    if dataset.features.shape[1] != 2:
        raise ValueError(f"landscape needs exactly 2 features, got {dataset.features.shape[1]}")
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    a0 = np.linspace(a0_range[0], a0_range[1], resolution)
    a1 = np.linspace(a1_range[0], a1_range[1], resolution)
    x1, x2 = dataset.features[:, 0], dataset.features[:, 1]
    w, positive = _weights(dataset.labels, dataset.sensitive[notion.attribute], notion, relaxation.normalization)
    surrogate = relax_pos if positive else relax_neg
    grid = np.empty((resolution, resolution))
    for i, b in enumerate(a0):
        scores = -x2[None, :] + a1[:, None] * x1[None, :] + b
        rates = _group_rates(surrogate(relaxation, scores), w)
        grid[i] = np.abs(rates[-1] - rates[1])
    top = grid.max()
    if top > 0:
        grid = grid / top
    return a0, a1, grid


def write_grid_csv(path: str | Path, a0: np.ndarray, a1: np.ndarray, grid: np.ndarray) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["a0", "a1", "value"])
        for i, b in enumerate(a0):
            for j, s in enumerate(a1):
                out.writerow([repr(float(b)), repr(float(s)), repr(float(grid[i, j]))])
