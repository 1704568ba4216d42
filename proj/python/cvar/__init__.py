"""Cross-view attention regularization: datasets, training and evaluation."""

from ._core import (
    ConfigError,
    IoError,
    ShapeError,
    config_text,
    d_a,
    d_x_pixel,
    evaluate,
    fingerprint,
    generate_dataset,
    gradcheck,
    mean_average_precision,
    topk_accuracy,
    train,
)

__all__ = [
    "ConfigError",
    "IoError",
    "ShapeError",
    "config_text",
    "d_a",
    "d_x_pixel",
    "evaluate",
    "fingerprint",
    "generate_dataset",
    "gradcheck",
    "mean_average_precision",
    "topk_accuracy",
    "train",
]
