"""Video-EEG fusion seizure detection."""

from ._core import (
    ConfigError,
    ContractError,
    DataError,
    DimensionError,
    Error,
    IoError,
    NumericError,
    config_fingerprint,
    config_json,
    cosine_cost,
    evaluate_grids,
    exact_ot,
    ipot,
    postprocess_events,
    preprocess,
    profile_names,
    run,
    welch_psd,
)

__all__ = [
    "ConfigError",
    "ContractError",
    "DataError",
    "DimensionError",
    "Error",
    "IoError",
    "NumericError",
    "config_fingerprint",
    "config_json",
    "cosine_cost",
    "evaluate_grids",
    "exact_ot",
    "ipot",
    "postprocess_events",
    "preprocess",
    "profile_names",
    "run",
    "welch_psd",
]
