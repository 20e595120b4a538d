"""Accurate and fair classifiers through multi-objective gradient descent on
hyperbolic-tangent fairness relaxations."""

from .data import Dataset, Schema, Split, gen_toy, load_csv, split, standardize
from .mamo import TrainConfig, TrainTrace, build_objectives, min_norm_point, train
from .model import Model, ModelSpec, init_model
from .pareto import hypervolume, linmap_select, pareto_front, spacing
from .relax import FairnessNotion, FairnessObjective, Relaxation, fairness_value

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "FairnessNotion",
    "FairnessObjective",
    "Model",
    "ModelSpec",
    "Relaxation",
    "Schema",
    "Split",
    "TrainConfig",
    "TrainTrace",
    "build_objectives",
    "fairness_value",
    "gen_toy",
    "hypervolume",
    "init_model",
    "linmap_select",
    "load_csv",
    "min_norm_point",
    "pareto_front",
    "spacing",
    "split",
    "standardize",
    "train",
]
