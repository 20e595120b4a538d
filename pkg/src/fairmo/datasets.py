"""Bundled Compas and Adult benchmark data.

The raw files (ProPublica ``compas-scores-two-years.csv`` and the UCI Adult
``adult.data``/``adult.test`` pair) ship gzipped inside the package. The
``prepare`` function applies the usual cleaning and write a CSV plus schema
JSON that :func:`fairmo.data.load_csv` reads.
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

import pandas as pd

from .data import Dataset, load_frame

_RAW = resources.files("fairmo") / "_data"

COMPAS_COLUMNS = [
    "sex",
    "age",
    "age_cat",
    "race",
    "juv_fel_count",
    "juv_misd_count",
    "juv_other_count",
    "priors_count",
    "c_charge_degree",
    "c_charge_desc",
    "two_year_recid",
]

COMPAS_SCHEMA = {
    "label": "two_year_recid",
    "label_positive": "1",
    "sensitive": [
        {"column": "race", "positive_value": "Caucasian"},
        {"column": "sex", "positive_value": "Male"},
    ],
    # ~400 sparse one-hot levels; held-out error is lower without them
    "drop_columns": ["c_charge_desc"],
}

ADULT_COLUMNS = [
    "age",
    "workclass",
    "fnlwgt",
    "education",
    "education_num",
    "marital_status",
    "occupation",
    "relationship",
    "race",
    "sex",
    "capital_gain",
    "capital_loss",
    "hours_per_week",
    "native_country",
    "income",
]

ADULT_SCHEMA = {
    "label": "income",
    "label_positive": ">50K",
    "sensitive": [
        {"column": "sex", "positive_value": "Male"},
        {"column": "race", "positive_value": "White"},
    ],
    # fnlwgt is a sampling weight; education duplicates education_num
    "drop_columns": ["fnlwgt", "education"],
}

SCHEMAS = {"compas": COMPAS_SCHEMA, "adult": ADULT_SCHEMA}


def compas_frame() -> pd.DataFrame:
    """ProPublica two-year recidivism rows after the standard screening filter.

    Race is binarized to Caucasian / Non-Caucasian. Rows with a missing
    charge description are screened out too, leaving 6,167 rows.
    """
    with (_RAW / "compas-scores-two-years.csv.gz").open("rb") as fh:
        raw = pd.read_csv(fh, compression="gzip")
    keep = (
        raw["days_b_screening_arrest"].between(-30, 30)
        & (raw["is_recid"] != -1)
        & (raw["c_charge_degree"] != "O")
        & (raw["score_text"] != "N/A")
        & raw["c_charge_desc"].notna()
    )
    df = raw.loc[keep, COMPAS_COLUMNS].reset_index(drop=True)
    df["race"] = df["race"].where(df["race"] == "Caucasian", "Non-Caucasian")
    return df


def adult_frame() -> pd.DataFrame:
    """UCI Adult train and test files concatenated (48,842 rows).

    Unknown entries (``?``) are kept as their own category.
    """
    parts = []
    for name in ("adult.data.gz", "adult.test.gz"):
        with (_RAW / name).open("rb") as fh:
            part = pd.read_csv(
                fh,
                compression="gzip",
                header=None,
                names=ADULT_COLUMNS,
                skipinitialspace=True,
                comment="|",
                dtype=str,
            )
        parts.append(part.dropna(how="all"))
    df = pd.concat(parts, ignore_index=True)
    df["income"] = df["income"].str.rstrip(".")
    df["race"] = df["race"].where(df["race"] == "White", "Non-White")
    return df


_FRAMES = {"compas": compas_frame, "adult": adult_frame}


def load_builtin(name: str) -> Dataset:
    if name not in _FRAMES:
        raise ValueError(f"unknown built-in dataset {name!r}; expected one of {sorted(_FRAMES)}")
    return load_frame(_FRAMES[name](), SCHEMAS[name], name=name)


def prepare(name: str, out_dir: str | Path) -> tuple[Path, Path]:
    """Write ``<name>.csv`` and ``<name>.schema.json`` into ``out_dir``."""
    if name not in _FRAMES:
        raise ValueError(f"unknown built-in dataset {name!r}; expected one of {sorted(_FRAMES)}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{name}.csv"
    schema_path = out_dir / f"{name}.schema.json"
    _FRAMES[name]().to_csv(csv_path, index=False, encoding="utf-8", lineterminator="\n")
    schema_path.write_text(json.dumps(SCHEMAS[name], indent=2) + "\n", encoding="utf-8")
    return csv_path, schema_path
