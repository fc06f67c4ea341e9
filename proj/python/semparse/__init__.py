"""Neural semantic parser: LSTM encoder with sequence or tree decoders."""

import json

from ._semparse import (
    ConfigError,
    DataError,
    Parser,
    SemparseError,
    TrainingError,
    balanced_f1,
    exact_match,
    load_dataset,
    normalize_lf,
)
from . import _semparse

__all__ = [
    "ConfigError",
    "DataError",
    "Parser",
    "SemparseError",
    "TrainingError",
    "balanced_f1",
    "exact_match",
    "load_dataset",
    "normalize_lf",
    "train",
]


def train(config):
    """Train from a config dict (same keys as the JSON config files).

    Returns ``(parser, report)`` where report is a dict of per-epoch records.
    """
    parser, report = _semparse.train(json.dumps(config))
    return parser, json.loads(report)
