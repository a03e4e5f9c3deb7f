"""Zero-shot domain adaptation with set-encoded latent domain vectors."""

from ._zsda import (
    Config,
    ConfigError,
    Dataset,
    Model,
    ParseError,
    SchemaError,
    ShapeError,
    kl_standard_normal,
    latents_csv,
    load_dataset,
    load_model,
    rotated_gaussians,
    run_loo,
    slope_regression,
    train,
)

__all__ = [
    "Config",
    "ConfigError",
    "Dataset",
    "Model",
    "ParseError",
    "SchemaError",
    "ShapeError",
    "kl_standard_normal",
    "latents_csv",
    "load_dataset",
    "load_model",
    "rotated_gaussians",
    "run_loo",
    "slope_regression",
    "train",
]
