"""Multi-objective gradient descent with a common descent vector.

Each step normalizes every objective's gradient by that objective's loss at
the initial weights, finds the min-norm point of the convex hull of the
normalized gradients, and steps along it. The sum-of-losses and
unconstrained (performance-only) baselines share the loop.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import ConfigurationError, Dataset, Split
from .model import Batch, BCEObjective, Model, ModelSpec, draw_masks, forward, grad, init_model
from .relax import DegenerateGroupError, FairnessNotion, FairnessObjective, Relaxation, true_fairness

logger = logging.getLogger(__name__)

MODES = ("mamo", "sum", "unconstrained")


@dataclass(frozen=True)
class TrainConfig:
    lam: float = 0.1
    c: float = 2.0
    lr: float = 0.01
    epochs: int = 500
    batch_size: int = 512
    seed: int = 0
    mode: str = "mamo"
    eps_stat: float = 1e-6
    eps_norm: float = 1e-12
    normalization: str = "group"
    include_sensitive: bool = True
    dropout: bool = True

    def __post_init__(self):
        if self.mode == "sum-of-losses":
            object.__setattr__(self, "mode", "sum")
        if self.mode not in MODES:
            raise ConfigurationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.lr > 0:
            raise ConfigurationError("learning rate must be positive")
        if self.epochs < 0:
            raise ConfigurationError("epochs must be non-negative")
        if self.batch_size < 1:
            raise ConfigurationError("batch size must be at least 1")
        if not (self.eps_stat > 0 and self.eps_norm > 0):
            raise ConfigurationError("tolerances must be positive")
        if self.lam < 0 or not self.c > 0:
            raise ConfigurationError("lam must be >= 0 and c > 0")

    def to_dict(self) -> dict:
        return asdict(self)


def build_objectives(notions: Sequence[FairnessNotion], config: TrainConfig) -> list:
    """BCE followed by one HTR fairness objective per notion."""
    relaxation = Relaxation("htr", c=config.c, normalization=config.normalization)
    objectives = [BCEObjective()] + [FairnessObjective(n, relaxation, config.lam) for n in notions]
    names = [o.name for o in objectives]
    if len(set(names)) != len(names):
        raise ConfigurationError(f"objective names must be unique: {names}")
    return objectives


def normalize_gradients(grads: Sequence[np.ndarray], initial_losses: Sequence[float], eps_norm: float = 1e-12):
    return [g / max(float(l0), eps_norm) for g, l0 in zip(grads, initial_losses)]


def _pair_weight(v11: float, v12: float, v22: float) -> float:
    """Weight on the first vector of the min-norm point on a segment."""
    denom = v11 + v22 - 2.0 * v12
    if denom <= 0.0:
        return 1.0
    return min(max((v22 - v12) / denom, 0.0), 1.0)


def _affine_min_norm(gram: np.ndarray) -> np.ndarray:
    """Minimizer of ``a @ gram @ a`` subject to ``sum(a) = 1`` (sign unconstrained)."""
    m = gram.shape[0]
    kkt = np.zeros((m + 1, m + 1))
    kkt[:m, :m] = gram
    kkt[:m, m] = 1.0
    kkt[m, :m] = 1.0
    rhs = np.zeros(m + 1)
    rhs[m] = 1.0
    sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
    return sol[:m]


def _polish(gram: np.ndarray, alpha: np.ndarray, tol: float = 1e-12) -> np.ndarray | None:
    """Exact active-set solve seeded with the Frank-Wolfe support.

    Returns None if no exact KKT point is found within ``2k`` support changes.
    """
    k = gram.shape[0]
    support = list(np.flatnonzero(alpha > 1e-9)) or [int(np.argmax(alpha))]
    scale = max(1.0, float(np.max(np.abs(gram))))
    for _ in range(2 * k + 2):
        sub = _affine_min_norm(gram[np.ix_(support, support)])
        if np.any(sub < -tol):
            support.pop(int(np.argmin(sub)))
            continue
        cand = np.zeros(k)
        cand[support] = np.clip(sub, 0.0, None)
        cand /= cand.sum()
        ga = gram @ cand
        norm2 = float(cand @ ga)
        viol = norm2 - ga
        viol[support] = 0.0
        j = int(np.argmax(viol))
        if viol[j] <= tol * scale:
            return cand
        support.append(j)
    return None


def min_norm_point(grads: Sequence[np.ndarray], tol: float = 1e-10, max_iter: int = 500):
    """Solve ``min ||sum_i a_i g_i||^2`` over the probability simplex.

    Returns ``(alpha, p_star)``. One gradient is returned as is; two use the
    closed-form segment solution; three or more run Frank-Wolfe (exact line
    search, duality-gap stopping rule) followed by an exact solve on the
    support it found.
    """
    g = np.stack([np.asarray(v, dtype=float) for v in grads])
    if g.ndim != 2:
        raise ValueError("gradients must be equal-length vectors")
    k = g.shape[0]
    if k == 1:
        return np.ones(1), g[0].copy()
    gram = g @ g.T
    if k == 2:
        a = _pair_weight(gram[0, 0], gram[0, 1], gram[1, 1])
        alpha = np.array([a, 1.0 - a])
        return alpha, alpha @ g

    # start from the best pair
    best = None
    for i in range(k):
        for j in range(i + 1, k):
            a = _pair_weight(gram[i, i], gram[i, j], gram[j, j])
            val = a * a * gram[i, i] + 2 * a * (1 - a) * gram[i, j] + (1 - a) ** 2 * gram[j, j]
            if best is None or val < best[0]:
                best = (val, i, j, a)
    _, i, j, a = best
    alpha = np.zeros(k)
    alpha[i], alpha[j] = a, 1.0 - a

    for _ in range(max_iter):
        ga = gram @ alpha
        norm2 = float(alpha @ ga)
        t = int(np.argmin(ga))
        if norm2 - ga[t] <= tol:
            break
        step = _pair_weight(norm2, float(ga[t]), float(gram[t, t]))
        alpha = step * alpha
        alpha[t] += 1.0 - step

    polished = _polish(gram, alpha)
    if polished is not None and float(polished @ gram @ polished) <= float(alpha @ gram @ alpha) + 1e-15:
        alpha = polished
    return alpha, alpha @ g


def is_pareto_stationary(p_star: np.ndarray, eps_stat: float = 1e-6) -> bool:
    return float(np.linalg.norm(p_star)) <= eps_stat


@dataclass
class StepResult:
    model: Model
    losses: dict
    pstar_norm: float
    alpha: np.ndarray | None
    skipped: list = field(default_factory=list)


def objective_gradients(model: Model, batch: Batch, objectives: Sequence, masks=None, only_first: bool = False):
    """Values and gradients of each objective, in objective order.

    Objectives whose groups are absent from the batch come back as ``None``.
    """
    out = []
    for i, obj in enumerate(objectives):
        if only_first and i > 0:
            out.append(None)
            continue
        try:
            out.append(grad(model, obj, batch, masks))
        except DegenerateGroupError:
            out.append(None)
    return out


def step(model: Model, batch: Batch, objectives: Sequence, initial_losses: Sequence[float], config: TrainConfig, masks=None) -> StepResult:
    """One descent step on ``batch``; all objectives share the dropout ``masks``."""
    results = objective_gradients(model, batch, objectives, masks, only_first=config.mode == "unconstrained")
    if results[0] is None:
        raise DegenerateGroupError("the performance objective could not be evaluated")
    live = [i for i, r in enumerate(results) if r is not None]
    skipped = [objectives[i].name for i in range(1, len(objectives)) if results[i] is None]
    if config.mode == "unconstrained":
        skipped = []
    losses = {objectives[i].name: results[i][0] for i in live}
    alpha = None
    if config.mode == "mamo":
        normed = normalize_gradients(
            [results[i][1] for i in live], [initial_losses[i] for i in live], config.eps_norm
        )
        weights, direction = min_norm_point(normed)
        alpha = np.zeros(len(objectives))
        alpha[live] = weights
    elif config.mode == "sum":
        direction = np.sum([results[i][1] for i in live], axis=0)
    else:
        direction = results[0][1]
    new = model.with_params(model.params - config.lr * direction)
    return StepResult(new, losses, float(np.linalg.norm(direction)), alpha, skipped)


@dataclass
class EpochRecord:
    epoch: int
    steps: int
    train: dict
    validation: dict
    pstar_norm: float
    checkpoint: Model


@dataclass
class TrainTrace:
    objective_names: list
    metric_names: list
    mode: str
    initial_losses: list
    records: list = field(default_factory=list)
    skipped_batches: int = 0

    @property
    def columns(self) -> list[str]:
        return (
            ["epoch", "steps"]
            + [f"train_{n}" for n in self.objective_names]
            + [f"val_{n}" for n in self.metric_names]
            + ["pstar_norm"]
        )

    def rows(self) -> list[list]:
        return [
            [r.epoch, r.steps]
            + [r.train[n] for n in self.objective_names]
            + [r.validation[n] for n in self.metric_names]
            + [r.pstar_norm]
            for r in self.records
        ]

    def to_csv(self) -> str:
        buf = io.StringIO()
        out = csv.writer(buf, lineterminator="\n")
        out.writerow(self.columns)
        for row in self.rows():
            out.writerow([v if isinstance(v, int) else repr(float(v)) for v in row])
        return buf.getvalue()

    def validation_matrix(self, names: Sequence[str] | None = None) -> np.ndarray:
        names = list(names or self.metric_names)
        return np.array([[r.validation[n] for n in names] for r in self.records], dtype=float)

    def write(self, run_dir: str | Path) -> None:
        run_dir = Path(run_dir)
        (run_dir / "checkpoints").mkdir(parents=True, exist_ok=True)
        (run_dir / "trace.csv").write_text(self.to_csv(), encoding="utf-8")
        for r in self.records:
            r.checkpoint.save(run_dir / "checkpoints" / f"epoch_{r.epoch}.json")


def evaluate(model: Model, batch: Batch, notions: Sequence[FairnessNotion]) -> dict:
    """Error rate and exact absolute fairness measures (eval mode)."""
    scores = forward(model, batch.x)
    out = {"error": float(np.mean(np.where(scores > 0, 1.0, -1.0) != batch.y))}
    for n in notions:
        out[n.label] = true_fairness(scores, batch.y, batch.sensitive[n.attribute], n)
    return out


def _objective_values(model: Model, batch: Batch, objectives: Sequence) -> dict:
    scores = forward(model, batch.x)
    return {o.name: float(o(scores, batch)[0]) for o in objectives}


def train(dataset: Dataset, split: Split, spec: ModelSpec, objectives: Sequence, config: TrainConfig) -> TrainTrace:
    """Run the epoch/batch loop and checkpoint after every epoch.

    ``dataset`` should already be standardized. Initial losses are taken on
    the full training split at the initial weights. Validation records hold
    the error rate and the exact fairness measure of every fairness objective.
    """
    if len(split.train) == 0:
        raise ConfigurationError("the training split is empty")
    if len(split.validation) == 0:
        raise ConfigurationError("the validation split is empty")
    notions = [o.notion for o in objectives[1:]]
    for n in notions:
        if n.attribute not in dataset.sensitive:
            raise ConfigurationError(f"unknown sensitive attribute {n.attribute!r}")
    if not config.dropout:
        spec = ModelSpec(spec.kind, spec.input_dim, spec.hidden, 0.0, spec.seed)

    full = Batch.from_dataset(dataset, config.include_sensitive)
    if full.x.shape[1] != spec.input_dim:
        raise ConfigurationError(f"model expects {spec.input_dim} inputs, data has {full.x.shape[1]}")
    train_batch = full.take(split.train)
    val_batch = full.take(split.validation)

    model = init_model(spec, seed=config.seed)
    shuffle_rng, dropout_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(config.seed).spawn(2))

    init_results = objective_gradients(model, train_batch, objectives)
    if any(r is None for r in init_results):
        raise ConfigurationError("a fairness objective is degenerate on the training split")
    initial_losses = [r[0] for r in init_results]
    _, p0 = min_norm_point(normalize_gradients([r[1] for r in init_results], initial_losses, config.eps_norm))

    trace = TrainTrace(
        objective_names=[o.name for o in objectives],
        metric_names=["error"] + [n.label for n in notions],
        mode=config.mode,
        initial_losses=initial_losses,
    )

    def record(epoch, steps, pnorm):
        trace.records.append(
            EpochRecord(
                epoch=epoch,
                steps=steps,
                train=_objective_values(model, train_batch, objectives),
                validation=evaluate(model, val_batch, notions),
                pstar_norm=pnorm,
                checkpoint=model,
            )
        )

    record(0, 0, float(np.linalg.norm(p0)))
    n_train = len(split.train)
    steps = 0
    for epoch in range(1, config.epochs + 1):
        order = shuffle_rng.permutation(n_train)
        norms = []
        for start in range(0, n_train, config.batch_size):
            batch = train_batch.take(order[start : start + config.batch_size])
            masks = draw_masks(spec, len(batch), dropout_rng)
            result = step(model, batch, objectives, initial_losses, config, masks)
            if result.skipped:
                trace.skipped_batches += 1
            model = result.model
            norms.append(result.pstar_norm)
            steps += 1
        record(epoch, steps, float(np.mean(norms)))
    if trace.skipped_batches:
        logger.info("skipped fairness gradients on %d degenerate batches", trace.skipped_batches)
    return trace
