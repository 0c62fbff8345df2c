"""Differentiable neural reaction-diffusion textures."""

from ._core import (
    ConfigError,
    ContractError,
    DivergenceError,
    FormatError,
    IntegrityError,
    IoError,
    Model,
    StepReport,
    Trainer,
    TrainingAborted,
    autocorrelation_length,
    euler_step,
    gradcheck,
    load_model,
    load_target,
    lr_at,
    make_model,
    make_seed,
    save_model,
    simulate,
    texture_distance,
    to_rgb,
)

__all__ = [
    "ConfigError",
    "ContractError",
    "DivergenceError",
    "FormatError",
    "IntegrityError",
    "IoError",
    "Model",
    "StepReport",
    "Trainer",
    "TrainingAborted",
    "autocorrelation_length",
    "euler_step",
    "gradcheck",
    "load_model",
    "load_target",
    "lr_at",
    "make_model",
    "make_seed",
    "save_model",
    "simulate",
    "texture_distance",
    "to_rgb",
]
