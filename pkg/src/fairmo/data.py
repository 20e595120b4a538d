"""Tabular dataset ingestion, the Gaussian toy dataset, standardization and splits."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)


class SchemaError(ValueError):
    """A declared column is missing or the schema itself is malformed."""


class DataValidationError(ValueError):
    """The data violates a Dataset invariant."""


class ConfigurationError(ValueError):
    """Requested sizes or options are inconsistent with the data."""


@dataclass(frozen=True)
class SensitiveSpec:
    column: str
    positive_value: str


@dataclass(frozen=True)
class Schema:
    """How to read a CSV into a :class:`Dataset`.

    Cell values are compared to ``label_positive`` and each
    ``positive_value`` as whitespace-stripped strings.
    """

    label: str
    label_positive: str
    sensitive: tuple[SensitiveSpec, ...]
    drop_columns: tuple[str, ...] = ()

    @classmethod
    def from_dict(cls, raw: Mapping) -> "Schema":
        try:
            sensitive = tuple(
                SensitiveSpec(str(s["column"]), str(s["positive_value"])) for s in raw["sensitive"]
            )
            return cls(
                label=str(raw["label"]),
                label_positive=str(raw["label_positive"]),
                sensitive=sensitive,
                drop_columns=tuple(raw.get("drop_columns", ())),
            )
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed schema: {exc!r}") from exc

    @classmethod
    def load(cls, path: str | Path) -> "Schema":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "label_positive": self.label_positive,
            "sensitive": [{"column": s.column, "positive_value": s.positive_value} for s in self.sensitive],
            "drop_columns": list(self.drop_columns),
        }


@dataclass(frozen=True)
class Dataset:
    """Features, ±1 labels and one or more ±1 sensitive columns.

    ``features`` holds the non-sensitive columns only; :meth:`design_matrix`
    appends the sensitive columns when the model should see them.
    """

    features: np.ndarray
    labels: np.ndarray
    sensitive: Mapping[str, np.ndarray]
    name: str = "dataset"
    feature_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        features = np.asarray(self.features, dtype=float)
        if features.ndim != 2:
            raise DataValidationError("features must be a 2-D matrix")
        labels = np.asarray(self.labels, dtype=float)
        n = features.shape[0]
        if labels.shape != (n,):
            raise DataValidationError(f"labels have shape {labels.shape}, expected ({n},)")
        _check_pm1(labels, "labels")
        sensitive = {}
        for col, values in self.sensitive.items():
            values = np.asarray(values, dtype=float)
            if values.shape != (n,):
                raise DataValidationError(f"sensitive column {col!r} has shape {values.shape}, expected ({n},)")
            _check_pm1(values, col)
            if not (np.any(values == 1) and np.any(values == -1)):
                raise DataValidationError(f"sensitive column {col!r} contains a single group")
            values.setflags(write=False)
            sensitive[col] = values
        if not sensitive:
            raise DataValidationError("at least one sensitive column is required")
        names = tuple(self.feature_names) or tuple(f"x{i + 1}" for i in range(features.shape[1]))
        if len(names) != features.shape[1]:
            raise DataValidationError("feature_names does not match the number of feature columns")
        features.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "sensitive", sensitive)
        object.__setattr__(self, "feature_names", names)

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def sensitive_names(self) -> tuple[str, ...]:
        return tuple(self.sensitive)

    def design_matrix(self, include_sensitive: bool = True) -> np.ndarray:
        if not include_sensitive:
            return self.features
        extra = np.column_stack([self.sensitive[c] for c in self.sensitive])
        return np.hstack([self.features, extra])

    def subset(self, indices: Sequence[int]) -> "Dataset":
        idx = np.asarray(indices, dtype=int)
        return Dataset(
            self.features[idx],
            self.labels[idx],
            {c: v[idx] for c, v in self.sensitive.items()},
            name=self.name,
            feature_names=self.feature_names,
        )

    def with_features(self, features: np.ndarray) -> "Dataset":
        return Dataset(features, self.labels, self.sensitive, name=self.name, feature_names=self.feature_names)


@dataclass(frozen=True)
class Split:
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray

    def sizes(self) -> tuple[int, int, int]:
        return len(self.train), len(self.validation), len(self.test)


def _check_pm1(values: np.ndarray, what: str) -> None:
    bad = np.flatnonzero((values != 1) & (values != -1))
    if bad.size:
        raise DataValidationError(f"{what} must be ±1; row {int(bad[0])} has {values[bad[0]]!r}")


def _binarize(column: pd.Series, positive: str) -> np.ndarray:
    return np.where(column.astype(str).str.strip() == positive, 1.0, -1.0)


def load_csv(path: str | Path, schema: Schema | Mapping, name: str | None = None) -> Dataset:
    """Read a headered, comma-delimited UTF-8 CSV into a Dataset.

    The label and every sensitive column are mapped to ±1 through the schema.
    Remaining non-numeric columns are one-hot encoded (in order of first
    appearance), numeric columns are kept as-is. Rows with a missing value in
    any retained column are dropped; the count is logged.

    Raises:
        SchemaError: a declared column is absent.
        DataValidationError: empty file, a non-binary label or sensitive
            column, or a single-group sensitive column.
    """
    path = Path(path)
    try:
        df = pd.read_csv(path, sep=",", encoding="utf-8", dtype=str, keep_default_na=True)
    except pd.errors.EmptyDataError as exc:
        raise DataValidationError(f"{path} is empty") from exc
    return load_frame(df, schema, name=name or path.stem)


def load_frame(df: pd.DataFrame, schema: Schema | Mapping, name: str = "dataset") -> Dataset:
    """:func:`load_csv` on an already-read frame of string cells."""
    if not isinstance(schema, Schema):
        schema = Schema.from_dict(schema)
    if df.empty:
        raise DataValidationError(f"{name} has no data rows")
    df = df.astype(str).where(df.notna(), None)

    declared = [schema.label] + [s.column for s in schema.sensitive]
    missing = [c for c in declared + list(schema.drop_columns) if c not in df.columns]
    if missing:
        raise SchemaError(f"columns {missing} not found in {name}")
    df = df.drop(columns=list(schema.drop_columns))

    n_before = len(df)
    df = df.dropna(axis=0, how="any")
    if len(df) < n_before:
        logger.info("dropped %d rows with missing values from %s", n_before - len(df), name)
    if df.empty:
        raise DataValidationError(f"{name} has no complete rows")

    for col in declared:
        text = df[col].str.strip()
        seen = list(dict.fromkeys(text))
        if len(seen) > 2:
            # 1-based data row of the file, header excluded
            row = int(text.index[~text.isin(seen[:2])][0]) + 1
            raise DataValidationError(f"column {col!r} is not binary: value {seen[2]!r} at row {row}")

    labels = _binarize(df[schema.label], schema.label_positive)
    sensitive = {s.column: _binarize(df[s.column], s.positive_value) for s in schema.sensitive}

    rest = df.drop(columns=declared)
    names: list[str] = []
    blocks: list[np.ndarray] = []
    for col in rest.columns:
        text = rest[col].str.strip()
        numeric = pd.to_numeric(text, errors="coerce")
        if not numeric.isna().any():
            names.append(col)
            # python float parsing is correctly rounded; to_numeric is not
            blocks.append(text.astype(float).to_numpy()[:, None])
        else:
            levels = list(dict.fromkeys(text))
            names.extend(f"{col}={lvl}" for lvl in levels)
            blocks.append((text.to_numpy()[:, None] == np.array(levels)[None, :]).astype(float))
    features = np.hstack(blocks) if blocks else np.zeros((len(df), 0))
    return Dataset(features, labels, sensitive, name=name, feature_names=tuple(names))


def write_csv(dataset: Dataset, path: str | Path) -> Schema:
    """Write a Dataset as CSV and return the schema that reads it back unchanged."""
    frame = pd.DataFrame(dataset.features, columns=list(dataset.feature_names))
    frame["label"] = dataset.labels.astype(int)
    for col, values in dataset.sensitive.items():
        frame[col] = values.astype(int)
    # repr round-trips float64 exactly
    frame.to_csv(path, index=False, float_format="%.17g", encoding="utf-8", lineterminator="\n")
    return Schema(
        label="label",
        label_positive="1",
        sensitive=tuple(SensitiveSpec(c, "1") for c in dataset.sensitive),
    )


def split(dataset: Dataset | int, sizes: tuple[int, int], seed: int) -> Split:
    """Shuffle indices with ``seed``; the first ``sizes[0]`` go to train, the
    next ``sizes[1]`` to validation, and the remainder to test."""
    n = dataset if isinstance(dataset, int) else len(dataset)
    n_train, n_val = (int(s) for s in sizes)
    if n_train < 0 or n_val < 0 or n_train + n_val > n:
        raise ConfigurationError(f"split sizes {sizes} exceed the {n} available rows")
    perm = np.random.default_rng(seed).permutation(n)
    return Split(perm[:n_train], perm[n_train : n_train + n_val], perm[n_train + n_val :])


TOY_MEANS = {
    "protected_negative": (2.0, -1.0),
    "protected_positive_a": (3.0, -1.0),
    "protected_positive_b": (1.0, 4.0),
    "unprotected_positive": (2.5, 2.5),
    "unprotected_negative": (4.5, -1.5),
}
TOY_VARIANCES = {
    "protected_negative": 1.0,
    "protected_positive_a": 1.0,
    "protected_positive_b": 0.5,
    "unprotected_positive": 1.0,
    "unprotected_negative": 1.0,
}


def _toy_components(rng: np.random.Generator, n: int) -> dict[str, np.ndarray]:
    def draw(key, size):
        return rng.normal(TOY_MEANS[key], np.sqrt(TOY_VARIANCES[key]), size=(size, 2))

    parts = {"protected_negative": draw("protected_negative", n)}
    # fair coin per point picks the mixture component
    use_b = rng.random(n) < 0.5
    a = draw("protected_positive_a", n)
    b = draw("protected_positive_b", n)
    parts["protected_positive"] = np.where(use_b[:, None], b, a)
    parts["protected_positive_uses_b"] = use_b
    parts["unprotected_positive"] = draw("unprotected_positive", n)
    parts["unprotected_negative"] = draw("unprotected_negative", n)
    return parts


def gen_toy(seed: int, n_per_component: int = 150) -> Dataset:
    """Two-dimensional Gaussian toy dataset with a binary group attribute.

    The protected group (``group = -1``) has ``n_per_component`` negatives and
    ``n_per_component`` positives, the positives drawn from an equal mixture of
    two Gaussians. The unprotected group (``group = +1``) has
    ``n_per_component`` of each label. Total size is ``4 * n_per_component``.
    """
    if n_per_component < 1:
        raise ConfigurationError("n_per_component must be at least 1")
    parts = _toy_components(np.random.default_rng(seed), n_per_component)
    blocks = [
        (parts["protected_negative"], -1.0, -1.0),
        (parts["protected_positive"], 1.0, -1.0),
        (parts["unprotected_positive"], 1.0, 1.0),
        (parts["unprotected_negative"], -1.0, 1.0),
    ]
    x = np.vstack([b[0] for b in blocks])
    y = np.concatenate([np.full(len(b[0]), b[1]) for b in blocks])
    g = np.concatenate([np.full(len(b[0]), b[2]) for b in blocks])
    return Dataset(x, y, {"group": g}, name="toy", feature_names=("x1", "x2"))


TOY_SCHEMA = {"label": "label", "label_positive": "1", "sensitive": [{"column": "group", "positive_value": "1"}]}


def write_toy_csv(dataset: Dataset, path: str | Path) -> None:
    """Write the toy dataset with columns ``x1,x2,label,group``."""
    frame = pd.DataFrame(
        {
            "x1": dataset.features[:, 0],
            "x2": dataset.features[:, 1],
            "label": dataset.labels.astype(int),
            "group": dataset.sensitive["group"].astype(int),
        }
    )
    frame.to_csv(path, index=False, float_format="%.17g", encoding="utf-8", lineterminator="\n")


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, x: np.ndarray) -> "Standardizer":
        mean = x.mean(axis=0)
        std = x.std(axis=0)
        # zero-variance columns are only centered
        scale = np.where(std > 1e-12 * np.maximum(1.0, np.abs(mean)), std, 1.0)
        return cls(mean, scale)

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.scale


def standardize(dataset: Dataset, train_indices: Sequence[int]) -> Dataset:
    """Scale each feature column to mean 0, variance 1 over the train rows.

    All rows are transformed with the train statistics. Sensitive columns are
    left at ±1: they double as group masks.
    """
    idx = np.asarray(train_indices, dtype=int)
    if idx.size == 0:
        raise ConfigurationError("standardize needs at least one train index")
    scaler = Standardizer.fit(dataset.features[idx])
    return dataset.with_features(scaler.transform(dataset.features))
