"""Shallow adversarial pattern models (categorical and continuous)."""

from __future__ import annotations

import numpy as np

from .common import TrainConfig, TrainingDiverged
from .io import load_model, save_model
from .smile import (
    SmileBatch,
    SmileModel,
    fit_smile,
    smile_assign,
    smile_grad_check,
)
from .smile import default_config as smile_config
from .surreal import default_config as surreal_config
from .surreal import (
    SurrealBatch,
    SurrealModel,
    fit_surreal,
    monotonicity_rate,
    r_indices,
    surreal_assign,
    surreal_grad_check,
)

__all__ = [
    "TrainConfig",
    "TrainingDiverged",
    "SmileModel",
    "SmileBatch",
    "SurrealModel",
    "SurrealBatch",
    "fit_smile",
    "fit_surreal",
    "smile_assign",
    "surreal_assign",
    "r_indices",
    "monotonicity_rate",
    "pattern_directions",
    "grad_check",
    "smile_config",
    "surreal_config",
    "save_model",
    "load_model",
]


def pattern_directions(model, Z_controls) -> np.ndarray:
    """Unit-normalized mean displacement per pattern over held-out controls."""
    X = np.asarray(Z_controls, dtype=np.float64)
    if isinstance(model, SmileModel):
        D = np.vstack(
            [(model.map(X, k) - X).mean(axis=0) for k in range(model.K)]
        )
    elif isinstance(model, SurrealModel):
        D = model.maps(X).mean(axis=0)
    else:
        raise TypeError(f"unsupported model type {type(model).__name__}")
    norms = np.linalg.norm(D, axis=1)
    norms[norms == 0] = 1.0
    return D / norms[:, None]


def grad_check(model, batch, cfg: TrainConfig | None = None, eps: float = 1e-5) -> float:
    """Analytic-vs-finite-difference check; dispatches on model type."""
    if cfg is None:
        cfg = TrainConfig()
    if isinstance(model, SmileModel):
        return smile_grad_check(model, batch, cfg, eps)
    if isinstance(model, SurrealModel):
        return surreal_grad_check(model, batch, cfg, eps)
    raise TypeError(f"unsupported model type {type(model).__name__}")
