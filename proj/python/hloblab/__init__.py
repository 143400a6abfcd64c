"""Limit order book mid-price pipeline with a simplicial HLOB classifier."""

from hloblab._core import (
    HloblabError,
    build_tmfg,
    confusion_matrix,
    entropy,
    f1_score,
    gradcheck,
    label_series,
    mcc,
    mutual_information,
    parameter_table,
    percentile,
    round_trip_stats,
    run_cli,
    shape_cascade,
    synthesize_lob,
)

__all__ = [
    "HloblabError",
    "build_tmfg",
    "confusion_matrix",
    "entropy",
    "f1_score",
    "gradcheck",
    "label_series",
    "mcc",
    "mutual_information",
    "parameter_table",
    "percentile",
    "round_trip_stats",
    "run_cli",
    "shape_cascade",
    "synthesize_lob",
]
