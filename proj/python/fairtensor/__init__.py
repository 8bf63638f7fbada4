"""Fairness-aware tensor and matrix factorization recommenders.

Thin Python layer over the C++ core. Configs are plain dicts using the same
keys as the JSON config files.
"""

import json

from ._core import (
    ConfigError,
    EmptyDatasetError,
    FairtensorError,
    ObservationTensor,
    ParseError,
    SplitError,
    TrainedModel,
    UndefinedMetricError,
    f1_at_k,
    ks,
    mad,
    negative_sample,
    precision_at_k,
    recall_at_k,
    run_oracles,
    split,
)
from . import _core

MODELS = ("OMC", "OTC", "RMC", "RTC", "FM", "FT")


def synth_generate(config=None):
    """Returns (positives, curator_groups, positives_group0, positives_group1)."""
    return _core.synth_generate(json.dumps(config or {}))


def calibrate_bias(config, target_ratio):
    return _core.calibrate_bias(json.dumps(config), target_ratio)


def train_model(kind, train, groups=None, config=None):
    return _core.train_model(kind, train, groups, json.dumps(config or {}))


def load_checkpoint(path):
    with open(path) as f:
        return TrainedModel.from_checkpoint_json(f.read())


def save_checkpoint(model, path):
    with open(path, "w") as f:
        f.write(model.checkpoint_json())


def run_experiment(config):
    """Runs the full protocol; returns (csv_text, report_dict)."""
    csv_text, report = _core.run_experiment(json.dumps(config))
    return csv_text, json.loads(report)


__all__ = [
    "MODELS",
    "ConfigError",
    "EmptyDatasetError",
    "FairtensorError",
    "ObservationTensor",
    "ParseError",
    "SplitError",
    "TrainedModel",
    "UndefinedMetricError",
    "calibrate_bias",
    "f1_at_k",
    "ks",
    "load_checkpoint",
    "mad",
    "negative_sample",
    "precision_at_k",
    "recall_at_k",
    "run_experiment",
    "run_oracles",
    "save_checkpoint",
    "split",
    "synth_generate",
    "train_model",
]
