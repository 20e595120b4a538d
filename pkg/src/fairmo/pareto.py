"""Non-dominated filtering, hypervolume, spacing and LINMAP selection."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np


def _oriented(points, maximize) -> np.ndarray:
    """Points flipped so that every coordinate is minimized."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if maximize is None:
        return pts
    flip = np.where(np.broadcast_to(np.asarray(maximize, dtype=bool), (pts.shape[1],)), -1.0, 1.0)
    return pts * flip


def dominates(a, b, maximize=None) -> bool:
    """True iff ``a`` is no worse than ``b`` everywhere and better somewhere."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    a, b = _oriented(a, maximize)[0], _oriented(b, maximize)[0]
    return bool(np.all(a <= b) and np.any(a < b))


@dataclass(frozen=True)
class Front:
    points: np.ndarray
    indices: np.ndarray
    labels: tuple = ()

    def __len__(self) -> int:
        return len(self.indices)


def pareto_front(points, maximize=None, labels: Sequence | None = None) -> Front:
    """The non-dominated subset, in input order, with duplicates collapsed to
    their first occurrence."""
    raw = np.atleast_2d(np.asarray(points, dtype=float))
    if raw.size == 0:
        return Front(raw.reshape(0, raw.shape[-1] if raw.ndim == 2 else 0), np.zeros(0, dtype=int), ())
    if not np.all(np.isfinite(raw)):
        raise ValueError("objective values must be finite")
    pts = _oriented(raw, maximize)
    keep = []
    for i, p in enumerate(pts):
        no_worse = np.all(pts <= p, axis=1)
        better = no_worse & np.any(pts < p, axis=1)
        if better.any():
            continue
        # identical earlier point already represents this one
        if np.any(np.all(pts[:i] == p, axis=1)):
            continue
        keep.append(i)
    idx = np.array(keep, dtype=int)
    lab = tuple(labels[i] for i in idx) if labels is not None else ()
    return Front(raw[idx], idx, lab)


def _hv_min(pts: np.ndarray, ref: np.ndarray) -> float:
    """Volume dominated by ``pts`` (minimization) and bounded by ``ref``."""
    if len(pts) == 0:
        return 0.0
    k = pts.shape[1]
    if k == 1:
        return float(ref[0] - pts[:, 0].min())
    if k == 2:
        order = np.argsort(pts[:, 0], kind="stable")
        vol, best_y = 0.0, ref[1]
        for x, y in pts[order]:
            if y < best_y:
                vol += (ref[0] - x) * (best_y - y)
                best_y = y
        return float(vol)
    # slice along the last coordinate
    order = np.argsort(pts[:, -1], kind="stable")
    pts = pts[order]
    levels = np.append(pts[:, -1], ref[-1])
    vol = 0.0
    for i in range(len(pts)):
        depth = levels[i + 1] - levels[i]
        if depth > 0:
            vol += depth * _hv_min(pts[: i + 1, :-1], ref[:-1])
    return float(vol)


def hypervolume(front, reference=None) -> float:
    """Exact hypervolume of maximization points above ``reference`` (origin by default)."""
    pts = np.atleast_2d(np.asarray(getattr(front, "points", front), dtype=float))
    if pts.size == 0:
        return 0.0
    ref = np.zeros(pts.shape[1]) if reference is None else np.asarray(reference, dtype=float)
    if np.any(pts < ref):
        raise ValueError("every point must dominate the reference point")
    # negate into the minimization problem bounded by -ref
    return _hv_min(-pts, -ref)


def spacing(front) -> float:
    """Sample standard deviation of nearest-neighbour L1 distances (0 for fewer than 2 points)."""
    pts = np.atleast_2d(np.asarray(getattr(front, "points", front), dtype=float))
    if len(pts) < 2:
        return 0.0
    dist = np.abs(pts[:, None, :] - pts[None, :, :]).sum(axis=2)
    np.fill_diagonal(dist, np.inf)
    d = dist.min(axis=1)
    return float(np.sqrt(np.sum((d - d.mean()) ** 2) / (len(d) - 1)))


def linmap_select(front, norm: str = "l2") -> int:
    """Index of the point closest to the componentwise minimum (ties: lowest index)."""
    pts = np.atleast_2d(np.asarray(getattr(front, "points", front), dtype=float))
    if pts.size == 0:
        raise ValueError("cannot select from an empty front")
    diff = pts - pts.min(axis=0)
    if norm == "l2":
        dist = np.sqrt(np.sum(diff**2, axis=1))
    elif norm == "l1":
        dist = np.sum(np.abs(diff), axis=1)
    else:
        raise ValueError(f"unknown norm {norm!r}")
    best = dist.min()
    return int(np.flatnonzero(dist <= best + 1e-12 * max(1.0, best))[0])


def to_scores(errors_and_fairness: np.ndarray) -> np.ndarray:
    """Map (error, |measure|, ...) losses to maximization scores ``1 - loss``."""
    return 1.0 - np.asarray(errors_and_fairness, dtype=float)


def read_front_csv(path: str | Path) -> tuple[list[str], np.ndarray, list[str] | None]:
    """Objective names, values and optional ``checkpoint`` column of a front CSV."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    ck = header.index("checkpoint") if "checkpoint" in header else None
    names = [h for i, h in enumerate(header) if i != ck]
    values, checkpoints = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise ValueError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            values.append([float(v) for i, v in enumerate(row) if i != ck])
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from exc
        if ck is not None:
            checkpoints.append(row[ck])
    if not values:
        raise ValueError(f"{path} has no data rows")
    return names, np.array(values), (checkpoints if ck is not None else None)


def write_front_csv(path: str | Path, names: Sequence[str], values: np.ndarray, checkpoints: Sequence[str] | None = None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(list(names) + (["checkpoint"] if checkpoints is not None else []))
        for i, row in enumerate(np.atleast_2d(values)):
            cells = [repr(float(v)) for v in row]
            if checkpoints is not None:
                cells.append(checkpoints[i])
            out.writerow(cells)
