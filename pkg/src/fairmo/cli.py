"""Command-line front-end: train, landscape, pareto, gen-toy and prepare.

Every command writes UTF-8 CSV/JSON and exits with status 0 only after all
of its artifacts are on disk. Configuration and data problems exit with 2.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import spearmanr

from .data import ConfigurationError, Dataset, Schema, gen_toy, load_csv, split, standardize, write_toy_csv
from .datasets import SCHEMAS, load_builtin, prepare
from .mamo import TrainConfig, TrainTrace, build_objectives, evaluate, train
from .model import Batch, ModelSpec
from .pareto import hypervolume, linmap_select, pareto_front, read_front_csv, spacing, write_front_csv
from .relax import FairnessNotion, Relaxation, landscape_grid, write_grid_csv

logger = logging.getLogger("fairmo")

SCORE_MAPPING = "score = 1 - value for error and every absolute fairness measure; hypervolume reference is the origin"
_RELAXATION_FLAGS = {"htr": "htr", "linear": "linear", "ccr": "convex-concave", "convex-concave": "convex-concave", "indicator": "indicator"}


@dataclass
class RunConfig:
    """Everything needed to reproduce one training run."""

    dataset: str = "compas"  # built-in name, "toy", or a CSV path
    schema: str | None = None  # schema JSON for CSV datasets
    split: list = field(default_factory=lambda: [3000, 2000])
    seed: int = 0
    toy_n: int = 150
    model: dict = field(default_factory=lambda: {"kind": "mlp", "hidden": [60, 25], "dropout": 0.2})
    objectives: list = field(default_factory=lambda: [{"notion": "ddp", "attribute": "race"}])
    train: dict = field(default_factory=dict)
    # candidates for selection and the front: epochs >= max(1, ceil(burn_in * M))
    selection: dict = field(default_factory=lambda: {"norm": "l2", "burn_in": 0.5})
    output_dir: str = "runs"

    @classmethod
    def from_dict(cls, raw: dict, base: Path | None = None) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**raw)
        if base is not None:
            cfg.dataset = _resolve(cfg.dataset, base)
            if cfg.schema is not None:
                cfg.schema = _resolve(cfg.schema, base)
            cfg.output_dir = _resolve(cfg.output_dir, base, must_exist=False)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if len(self.split) != 2 or min(self.split) < 0:
            raise ConfigurationError(f"split must be [train, validation] counts, got {self.split}")
        if self.dataset not in ("toy", *SCHEMAS):
            if not Path(self.dataset).is_file():
                raise ConfigurationError(f"dataset file not found: {self.dataset}")
            if self.schema is None or not Path(self.schema).is_file():
                raise ConfigurationError("a CSV dataset needs an existing schema file")
        if not self.objectives:
            raise ConfigurationError("at least one fairness objective is required")
        if self.selection.get("norm", "l2") not in ("l1", "l2"):
            raise ConfigurationError("selection norm must be l1 or l2")
        if not 0.0 <= float(self.selection.get("burn_in", 0.5)) <= 1.0:
            raise ConfigurationError("selection burn_in must be in [0, 1]")
        self.train_config()  # surfaces invalid hyperparameters early

    def notions(self) -> list[FairnessNotion]:
        return [FairnessNotion(o["notion"], o["attribute"]) for o in self.objectives]

    def train_config(self) -> TrainConfig:
        return TrainConfig(**{**self.train, "seed": self.seed})

    def resolved(self) -> dict:
        out = asdict(self)
        out["train"] = self.train_config().to_dict()
        del out["train"]["seed"]
        return out

    def digest(self) -> str:
        body = {k: v for k, v in self.resolved().items() if k != "output_dir"}
        return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()[:10]


def _resolve(value: str, base: Path, must_exist: bool = True) -> str:
    if value in ("toy", *SCHEMAS) and must_exist:
        return value
    p = Path(value)
    return str(p if p.is_absolute() else (base / p).resolve())


def load_run_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON ({exc})") from None
    return RunConfig.from_dict(raw, base=path.parent)


def load_dataset(cfg: RunConfig) -> Dataset:
    if cfg.dataset == "toy":
        return gen_toy(cfg.seed, cfg.toy_n)
    if cfg.dataset in SCHEMAS:
        return load_builtin(cfg.dataset)
    return load_csv(cfg.dataset, Schema.load(cfg.schema))


def _new_run_dir(root: Path, digest: str) -> Path:
    stamp = time.strftime("%Y%m%dT%H%M%S", time.gmtime())
    run_dir = root / f"{stamp}-{digest}"
    n = 1
    while run_dir.exists():
        n += 1
        run_dir = root / f"{stamp}-{digest}-{n}"
    return run_dir


@dataclass
class RunResult:
    run_dir: Path
    trace: TrainTrace
    metrics: dict


def select_checkpoint(trace: TrainTrace, min_epoch: int = 1, norm: str = "l2") -> tuple[int, np.ndarray]:
    """LINMAP choice on validation values; returns (record index, candidate indices).

    Checkpoints before ``min_epoch`` are not candidates (all are, if that
    leaves none). Unconstrained runs only optimize error, so they are
    selected on error alone.
    """
    candidates = np.array([i for i, r in enumerate(trace.records) if r.epoch >= min_epoch], dtype=int)
    if len(candidates) == 0:
        candidates = np.arange(len(trace.records))
    names = ["error"] if trace.mode == "unconstrained" else trace.metric_names
    values = trace.validation_matrix(names)[candidates]
    front = pareto_front(values)
    return int(candidates[front.indices[linmap_select(front, norm)]]), candidates


def run_training(cfg: RunConfig) -> RunResult:
    """Load, split, standardize, train, select and write one run directory."""
    dataset = load_dataset(cfg)
    notions = cfg.notions()
    for n in notions:
        if n.attribute not in dataset.sensitive:
            raise ConfigurationError(f"objective attribute {n.attribute!r} is not a sensitive column")
    sp = split(dataset, tuple(cfg.split), cfg.seed)
    dataset = standardize(dataset, sp.train)
    tcfg = cfg.train_config()
    spec = ModelSpec(
        cfg.model.get("kind", "mlp"),
        dataset.design_matrix(tcfg.include_sensitive).shape[1],
        tuple(cfg.model.get("hidden", (60, 25))),
        float(cfg.model.get("dropout", 0.2)),
        cfg.seed,
    )
    trace = train(dataset, sp, spec, build_objectives(notions, tcfg), tcfg)

    norm = cfg.selection.get("norm", "l2")
    min_epoch = max(1, math.ceil(float(cfg.selection.get("burn_in", 0.5)) * tcfg.epochs))
    chosen, candidates = select_checkpoint(trace, min_epoch, norm)
    record = trace.records[chosen]
    test_batch = Batch.from_dataset(dataset, tcfg.include_sensitive).take(sp.test)
    attributes = list(dict.fromkeys(n.attribute for n in notions))
    report = [FairnessNotion(kind, a) for a in attributes for kind in ("ddp", "deo")]
    test = evaluate(record.checkpoint, test_batch, report) if len(sp.test) else {}

    scores = 1.0 - trace.validation_matrix()[candidates]
    front = pareto_front(scores, maximize=True)
    front_names = [f"1-{n}" for n in trace.metric_names]
    checkpoints = [f"checkpoints/epoch_{trace.records[candidates[i]].epoch}.json" for i in front.indices]

    metrics = {
        "mode": trace.mode,
        "selected_epoch": record.epoch,
        "selected_checkpoint": f"checkpoints/epoch_{record.epoch}.json",
        "validation": record.validation,
        "test": test,
        "front": {
            "coordinates": front_names,
            "score_mapping": SCORE_MAPPING,
            "size": len(front),
            "hv": hypervolume(front.points),
            "sp": spacing(front.points),
        },
        "candidate_epochs": [int(trace.records[candidates[0]].epoch), int(trace.records[candidates[-1]].epoch)],
        "skipped_batches": trace.skipped_batches,
        "split_sizes": list(sp.sizes()),
    }

    run_dir = _new_run_dir(Path(cfg.output_dir), cfg.digest())
    trace.write(run_dir)
    write_front_csv(run_dir / "front.csv", front_names, front.points, checkpoints)
    (run_dir / "config.json").write_text(json.dumps(cfg.resolved(), indent=2) + "\n", encoding="utf-8")
    (run_dir / "metrics.json").write_text(json.dumps(metrics, indent=2) + "\n", encoding="utf-8")
    return RunResult(run_dir, trace, metrics)


def _parse_range(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(v) for v in text.split(":"))
    except ValueError:
        raise ConfigurationError(f"range must look like lo:hi, got {text!r}") from None
    if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
        raise ConfigurationError(f"range needs finite lo < hi, got {text!r}")
    return lo, hi


def run_landscape(
    dataset: Dataset,
    relaxations: Sequence[str],
    a0: tuple[float, float],
    a1: tuple[float, float],
    resolution: int,
    c: float,
    out_dir: Path,
    notion: FairnessNotion,
) -> dict:
    """Write one grid CSV per relaxation (always including the indicator) and
    a fidelity report of Spearman correlations against the indicator grid."""
    kinds = []
    for r in relaxations:
        if r not in _RELAXATION_FLAGS:
            raise ConfigurationError(f"unknown relaxation {r!r}; expected one of {sorted(_RELAXATION_FLAGS)}")
        kinds.append(_RELAXATION_FLAGS[r])
    kinds = list(dict.fromkeys(["indicator"] + kinds))
    out_dir.mkdir(parents=True, exist_ok=True)
    grids = {}
    for kind in kinds:
        a0v, a1v, grid = landscape_grid(dataset, Relaxation(kind, c=c), notion, a0, a1, resolution)
        write_grid_csv(out_dir / f"landscape_{kind}.csv", a0v, a1v, grid)
        grids[kind] = grid
    truth = grids["indicator"].ravel()
    report = {"notion": notion.label, "c": c, "resolution": resolution, "a0": list(a0), "a1": list(a1), "spearman": {}}
    for kind in kinds:
        if kind == "indicator":
            continue
        rho = spearmanr(grids[kind].ravel(), truth).statistic
        report["spearman"][kind] = None if not np.isfinite(rho) else float(rho)
    (out_dir / "fidelity.json").write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    return report


def pareto_metrics(path: str | Path, norm: str = "l2", reference: Sequence[float] | None = None) -> dict:
    """Metrics of a CSV of maximization scores; dominated rows are dropped first.

    ``selected_index`` is the 0-based data row of the LINMAP choice.
    """
    names, values, _ = read_front_csv(path)
    front = pareto_front(values, maximize=True)
    dropped = len(values) - len(front)
    logger.info("excluded %d dominated row(s)", dropped)
    pick = linmap_select(-front.points, norm)
    return {
        "hv": hypervolume(front.points, reference),
        "sp": spacing(front.points),
        "selected_index": int(front.indices[pick]),
        "dominated": dropped,
    }


def _cmd_train(args) -> int:
    cfg = load_run_config(args.config)
    if args.mode is not None:
        cfg.train = {**cfg.train, "mode": args.mode}
    if args.seed is not None:
        cfg.seed = args.seed
    if args.epochs is not None:
        cfg.train = {**cfg.train, "epochs": args.epochs}
    if args.output_dir is not None:
        cfg.output_dir = str(Path(args.output_dir).resolve())
    cfg.validate()
    result = run_training(cfg)
    print(result.run_dir)
    print(json.dumps({"selected_epoch": result.metrics["selected_epoch"], "test": result.metrics["test"]}))
    return 0


def _cmd_landscape(args) -> int:
    if args.dataset == "toy":
        dataset = gen_toy(args.seed, args.n)
        attribute = "group"
    else:
        if args.schema is None:
            raise ConfigurationError("--schema is required for a CSV dataset")
        dataset = load_csv(args.dataset, Schema.load(args.schema))
        attribute = args.attribute or next(iter(dataset.sensitive))
    if args.res < 2:
        raise ConfigurationError("--res must be at least 2")
    report = run_landscape(
        dataset,
        [r.strip() for r in args.relaxations.split(",") if r.strip()],
        _parse_range(args.a0),
        _parse_range(args.a1),
        args.res,
        args.c,
        Path(args.out),
        FairnessNotion(args.notion, args.attribute or attribute),
    )
    print(json.dumps(report["spearman"]))
    return 0


def _cmd_pareto(args) -> int:
    reference = None if args.reference is None else [float(v) for v in args.reference.split(",")]
    out = pareto_metrics(args.front, args.norm, reference)
    text = json.dumps({k: out[k] for k in ("hv", "sp", "selected_index")})
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return 0


def _cmd_gen_toy(args) -> int:
    if args.n < 1:
        raise ConfigurationError("--n must be at least 1")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_toy_csv(gen_toy(args.seed, args.n), out)
    print(out)
    return 0


def _cmd_prepare(args) -> int:
    for path in prepare(args.dataset, args.out):
        print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fairmo", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one run from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--mode", choices=["mamo", "sum", "sum-of-losses", "unconstrained"])
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--output-dir")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("landscape", help="fairness landscapes of linear classifiers on 2-D data")
    p.add_argument("--dataset", default="toy", help="'toy' or a CSV path with two feature columns")
    p.add_argument("--schema", help="schema JSON for a CSV dataset")
    p.add_argument("--relaxations", default="htr,linear,ccr,indicator")
    p.add_argument("--a0", default="-5:5")
    p.add_argument("--a1", default="-5:5")
    p.add_argument("--res", type=int, default=100)
    p.add_argument("--c", type=float, default=2.0)
    p.add_argument("--notion", default="ddp")
    p.add_argument("--attribute")
    p.add_argument("--seed", type=int, default=0, help="toy dataset seed")
    p.add_argument("--n", type=int, default=150, help="toy points per component")
    p.add_argument("--out", default="landscape")
    p.set_defaults(func=_cmd_landscape)

    p = sub.add_parser("pareto", help="hypervolume, spacing and LINMAP choice of a front CSV")
    p.add_argument("--front", required=True)
    p.add_argument("--norm", choices=["l2", "l1"], default="l2")
    p.add_argument("--reference", help="comma-separated reference point (default: origin)")
    p.add_argument("--out", help="also write the JSON record here")
    p.set_defaults(func=_cmd_pareto)

    p = sub.add_parser("gen-toy", help="write the synthetic two-group dataset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, default=150, help="points per component")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen_toy)

    p = sub.add_parser("prepare", help="write a bundled dataset as CSV plus schema JSON")
    p.add_argument("--dataset", choices=sorted(SCHEMAS), required=True)
    p.add_argument("--out", default=".")
    p.set_defaults(func=_cmd_prepare)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
