"""Soft-label shapes over the non-target classes.

Every function here works on the last axis, so a single rank vector of
length ``C - 1`` and a batch of shape ``(N, C - 1)`` are both accepted.
"""

from __future__ import annotations

import numpy as np

KINDS = ("zipf", "constant", "rand-uniform", "rand-pareto", "linear")


def _check_ranks(ranks) -> np.ndarray:
    ranks = np.asarray(ranks, dtype=np.float64)
    if ranks.ndim == 0 or ranks.shape[-1] == 0:
        raise ValueError("no non-target classes")
    if np.any(ranks < 1) or not np.all(np.isfinite(ranks)):
        raise ValueError("ranks must be finite and >= 1")
    return ranks


def _normalize(w: np.ndarray) -> np.ndarray:
    return w / w.sum(axis=-1, keepdims=True)


def zipf_weights(ranks, alpha: float = 1.0) -> np.ndarray:
    """Zipf's law over ranks: ``r**-alpha / sum(r**-alpha)``.

    Fractional ranks are used as-is. ``alpha = 0`` gives the uniform label.
    """
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    ranks = _check_ranks(ranks)
    return _normalize(ranks ** -float(alpha))


def _pareto_by_rank(ranks: np.ndarray, rng: np.random.Generator, shape: float) -> np.ndarray:
    # classic Pareto(shape, scale=1); numpy's pareto() is the Lomax form
    draws = np.sort(rng.pareto(shape, size=ranks.shape[-1]) + 1.0)[::-1]
    order = np.argsort(ranks, kind="stable")
    out = np.empty_like(ranks)
    out[order] = draws
    # classes sharing a rank share the mean of the draws they span
    _, inverse = np.unique(ranks, return_inverse=True)
    sums = np.bincount(inverse, weights=out)
    counts = np.bincount(inverse)
    return (sums / counts)[inverse]


def make_distribution(
    kind: str,
    ranks,
    *,
    alpha: float = 1.0,
    seed: int | np.random.Generator | None = None,
    pareto_shape: float = 1.0,
) -> np.ndarray:
    """Build a soft label of the given ``kind`` (one of :data:`KINDS`).

    ``ranks`` fixes the number of non-target classes for every kind, and is
    only read for ``zipf``, ``linear`` and ``rand-pareto``. Random kinds draw
    from ``seed``; pass a ``Generator`` to keep drawing from one stream.
    """
    if kind == "zipf":
        return zipf_weights(ranks, alpha)
    ranks = _check_ranks(ranks)
    if kind == "constant":
        return np.full(ranks.shape, 1.0 / ranks.shape[-1])
    if kind == "linear":
        num_classes = ranks.shape[-1] + 1
        return _normalize(num_classes - ranks)
    if kind == "rand-uniform":
        rng = np.random.default_rng(seed)
        # (0, 1] so a normalizing sum can never be zero
        return _normalize(1.0 - rng.random(ranks.shape))
    if kind == "rand-pareto":
        if pareto_shape <= 0:
            raise ValueError(f"pareto shape must be > 0, got {pareto_shape}")
        rng = np.random.default_rng(seed)
        flat = ranks.reshape(-1, ranks.shape[-1])
        w = np.stack([_pareto_by_rank(row, rng, pareto_shape) for row in flat])
        return _normalize(w.reshape(ranks.shape))
    raise ValueError(f"unknown distribution kind {kind!r}; expected one of {KINDS}")


__all__ = ["KINDS", "zipf_weights", "make_distribution"]
