"""Autoencoder compression of inertial sensor windows."""

import json as _json

from ._core import (
    ContractError,
    DatasetError,
    FormatError,
    Model,
    StageError,
    TrainingDiverged,
    compute_reduction,
    decode_features,
    deserialize_features,
    encode_features,
    format_fixed,
    header_bytes,
    load_windows,
    measure_size_mb,
    render_report,
    serialize_features,
)
from ._core import run_experiment as _run_experiment


def run_experiment(experiment, root, out, **kwargs):
    """Run one experiment end to end; returns the result as a dict."""
    return _json.loads(_run_experiment(experiment, root, out, **kwargs))


__all__ = [
    "ContractError",
    "DatasetError",
    "FormatError",
    "Model",
    "StageError",
    "TrainingDiverged",
    "compute_reduction",
    "decode_features",
    "deserialize_features",
    "encode_features",
    "format_fixed",
    "header_bytes",
    "load_windows",
    "measure_size_mb",
    "render_report",
    "run_experiment",
    "serialize_features",
]
