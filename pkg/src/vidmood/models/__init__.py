"""The three clip classifiers and a name-keyed factory."""

from __future__ import annotations

import numpy as np

from .cnn_lstm import CnnLstmConfig, CnnLstmModel
from .swin3d import SwinConfig, SwinModel
from .vivit import ViViTConfig, ViViTModel

__all__ = [
    "MODEL_NAMES",
    "ViViTConfig", "ViViTModel",
    "SwinConfig", "SwinModel",
    "CnnLstmConfig", "CnnLstmModel",
    "build_model", "default_config",
]

MODEL_NAMES = ("vivit", "swin3d_t", "cnn_lstm")

_CONFIGS = {
    "vivit": ViViTConfig,
    "swin3d_t": SwinConfig,
    "cnn_lstm": CnnLstmConfig,
}
_MODELS = {
    "vivit": ViViTModel,
    "swin3d_t": SwinModel,
    "cnn_lstm": CnnLstmModel,
}


def default_config(name: str, **overrides):
    if name not in _CONFIGS:
        raise ValueError(f"unknown model {name!r}; expected one of {MODEL_NAMES}")
    return _CONFIGS[name](**overrides)


def build_model(name: str, config, seed: int):
    if name not in _MODELS:
        raise ValueError(f"unknown model {name!r}; expected one of {MODEL_NAMES}")
    return _MODELS[name](config, np.random.default_rng(seed))
