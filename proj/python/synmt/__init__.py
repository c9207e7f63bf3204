"""Python bindings for the synmt translation toolkit."""

import json as _json

from ._core import (
    ConfigError,
    DataError,
    Error,
    ParseError,
    Translator,
    UsageError,
    aer,
    bleu,
    linearize,
    make_toy_corpus,
    over_translation,
)
from ._core import count_parameters as _count_parameters
from ._core import train as _train

__all__ = [
    "ConfigError",
    "DataError",
    "Error",
    "ParseError",
    "Translator",
    "UsageError",
    "aer",
    "bleu",
    "count_parameters",
    "linearize",
    "make_toy_corpus",
    "over_translation",
    "train",
]


def count_parameters(**model):
    """Parameter count for model settings given as keyword arguments."""
    return _count_parameters(_json.dumps(model))


def train(config, epochs=None):
    """Train from a run configuration (dict or JSON string)."""
    if not isinstance(config, str):
        config = _json.dumps(config)
    return _train(config, epochs)
