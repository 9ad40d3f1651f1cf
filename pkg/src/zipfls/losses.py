"""Per-sample losses and their closed-form gradients w.r.t. the logits.

Logits are ``(C,)`` with an int target, or ``(N, C)`` with ``N`` targets;
values come back per sample and gradients in the logits' shape. All math
is float64 regardless of the input dtype.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from ._classes import drop_target, insert_target

LOG_FLOOR = 1e-15


class LossResult(NamedTuple):
    value: np.ndarray
    grad: np.ndarray


def _as_logits(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise ValueError("logits must be finite")
    return z


def log_softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(z) -> np.ndarray:
    return np.exp(log_softmax(_as_logits(z)))


def _onehot(target, num_classes: int, batch_shape) -> np.ndarray:
    out = np.zeros(batch_shape + (num_classes,))
    np.put_along_axis(out, np.asarray(target).reshape(batch_shape + (1,)), 1.0, axis=-1)
    return out


def nontarget_softmax(logits, target) -> np.ndarray:
    """Softmax over the C-1 non-target logits (target column removed)."""
    z = _as_logits(logits)
    return np.exp(log_softmax(drop_target(z, target)))


def zipf_loss(logits, target, tilde) -> LossResult:
    """KL(tilde || p_hat) over non-target classes.

    ``tilde`` is a fixed soft label in drop-target layout. The gradient is
    ``p_hat - tilde`` on non-target logits and exactly 0 on the target.
    """
    z = _as_logits(logits)
    tilde = np.asarray(tilde, dtype=np.float64)
    if np.any(tilde < 0) or np.any(np.abs(tilde.sum(axis=-1) - 1.0) > 1e-9):
        raise ValueError("soft label must be non-negative and sum to 1 within 1e-9")
    log_phat = log_softmax(drop_target(z, target))
    if tilde.shape != log_phat.shape:
        raise ValueError(f"soft label shape {tilde.shape} != non-target shape {log_phat.shape}")
    terms = np.where(tilde > 0, tilde * (np.log(np.maximum(tilde, LOG_FLOOR)) - log_phat), 0.0)
    # Gibbs: KL >= 0; clip rounding noise when tilde == p_hat
    value = np.maximum(terms.sum(axis=-1), 0.0)
    grad = insert_target(np.exp(log_phat) - tilde, target)
    return LossResult(value, grad)


def ce_loss(logits, target) -> LossResult:
    z = _as_logits(logits)
    logp = log_softmax(z)
    t = np.asarray(target)[..., None]
    value = -np.take_along_axis(logp, t, axis=-1)[..., 0]
    grad = np.exp(logp) - _onehot(target, z.shape[-1], z.shape[:-1])
    return LossResult(value, grad)


def ls_loss(logits, target, beta: float) -> LossResult:
    """Cross entropy against ``1 - beta`` on the target, ``beta/(C-1)`` elsewhere."""
    if not 0.0 <= beta < 1.0:
        raise ValueError(f"beta must be in [0, 1), got {beta}")
    z = _as_logits(logits)
    num_classes = z.shape[-1]
    if num_classes < 2:
        raise ValueError("no non-target classes")
    hot = _onehot(target, num_classes, z.shape[:-1])
    soft = hot * (1.0 - beta) + (1.0 - hot) * (beta / (num_classes - 1))
    logp = log_softmax(z)
    return LossResult(-(soft * logp).sum(axis=-1), np.exp(logp) - soft)


def total_loss(logits, target, tilde, lam: float) -> LossResult:
    """Cross entropy plus ``lam`` times the Zipf KL term."""
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    ce = ce_loss(logits, target)
    zipf = zipf_loss(logits, target, tilde)
    return LossResult(ce.value + lam * zipf.value, ce.grad + lam * zipf.grad)


__all__ = [
    "LossResult",
    "softmax",
    "log_softmax",
    "nontarget_softmax",
    "zipf_loss",
    "ce_loss",
    "ls_loss",
    "total_loss",
]
