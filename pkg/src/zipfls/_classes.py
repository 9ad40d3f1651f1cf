"""Helpers for moving between full class vectors and non-target vectors."""

from __future__ import annotations

import numpy as np


class ConfigError(ValueError):
    """Inconsistent shapes, class counts or configuration values."""


def _target_mask(num_classes: int, target) -> np.ndarray:
    target = np.asarray(target)
    if np.any(target < 0) or np.any(target >= num_classes):
        raise ConfigError(f"target {target} outside [0, {num_classes})")
    return np.arange(num_classes) != target[..., None]


def drop_target(x: np.ndarray, target) -> np.ndarray:
    """Remove the target column from the last axis.

    ``x`` is ``(C,)`` with an int target or ``(N, C)`` with ``N`` targets.
    The result keeps the remaining classes in ascending class-id order.
    """
    x = np.asarray(x)
    mask = _target_mask(x.shape[-1], target)
    return x[mask].reshape(x.shape[:-1] + (x.shape[-1] - 1,))


def insert_target(x: np.ndarray, target, fill: float = 0.0) -> np.ndarray:
    """Inverse of :func:`drop_target`; the target slot receives ``fill``."""
    x = np.asarray(x)
    num_classes = x.shape[-1] + 1
    mask = _target_mask(num_classes, target)
    out = np.full(x.shape[:-1] + (num_classes,), fill, dtype=x.dtype)
    out[mask] = x.reshape(-1)
    return out
