"""Python access to the desk-scale latent reasoning core."""

import json as _json

from ._core import (
    Model,
    VitalError,
    accuracy,
    detach_checkpoint,
    normalize_for_match,
    token_f1,
    trace_similarity,
)
from . import _core

__all__ = [
    "Model",
    "VitalError",
    "accuracy",
    "build_dataset",
    "checkpoint_info",
    "detach_checkpoint",
    "load_dataset",
    "normalize_for_match",
    "token_f1",
    "trace_similarity",
]


def build_dataset(out_dir, n=100, seed=7, faults=""):
    """Generate a dataset with the mock teacher; returns the build statistics."""
    return _json.loads(_core.build_dataset(str(out_dir), n, seed, faults))


def load_dataset(path):
    """Samples as dicts: id, question, answer, type, K, split, chain."""
    return _json.loads(_core.load_dataset(str(path)))


def checkpoint_info(path):
    """Parameter counts per namespace and the content digest."""
    return _json.loads(_core.checkpoint_info(str(path)))
