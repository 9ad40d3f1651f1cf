"""Ranking of non-target classes, by logits or by dense top-1 votes.

Rank vectors are laid out like :func:`zipfls._classes.drop_target`: the
target column removed, remaining classes in ascending class-id order.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from ._classes import ConfigError, drop_target

RANKING_MODES = ("logit", "dense1", "dense12")


def logit_rank(logits, target) -> np.ndarray:
    """Rank non-target classes 1..C-1 by descending logit.

    Exactly equal logits share the mean of the positions they span.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.shape[-1] < 2:
        raise ValueError("no non-target classes")
    return rankdata(-drop_target(logits, target), method="average", axis=-1)


def dense_votes(maps: Sequence[np.ndarray], target) -> np.ndarray:
    """Histogram of per-location argmax classes over every map.

    Each map is ``(H, W, C)``, or ``(N, H, W, C)`` with ``N`` targets.
    Location ties go to the lowest class id; votes for the target are
    discarded. Returns integer counts of shape ``(C,)`` or ``(N, C)``.
    """
    if len(maps) == 0:
        raise ConfigError("no dense maps supplied")
    maps = [np.asarray(m) for m in maps]
    num_classes = maps[0].shape[-1]
    batched = maps[0].ndim == 4
    for m in maps:
        if m.shape[-1] != num_classes:
            raise ConfigError(f"dense maps disagree on class count: {m.shape[-1]} vs {num_classes}")
        if m.ndim != maps[0].ndim or m.shape[-3] < 1 or m.shape[-2] < 1:
            raise ConfigError(f"bad dense map shape {m.shape}")
    if not batched:
        maps = [m[None] for m in maps]
    n = maps[0].shape[0]
    counts = np.zeros((n, num_classes), dtype=np.int64)
    offsets = (np.arange(n) * num_classes)[:, None]
    for m in maps:
        if m.shape[0] != n:
            raise ConfigError("dense maps disagree on batch size")
        top = m.reshape(n, -1, num_classes).argmax(axis=-1)
        counts += np.bincount((top + offsets).ravel(), minlength=n * num_classes).reshape(n, num_classes)
    target = np.broadcast_to(np.asarray(target), (n,))
    counts[np.arange(n), target] = 0
    return counts if batched else counts[0]


def votes_to_ranks(counts, target) -> np.ndarray:
    """Rank non-target classes by descending vote count.

    Voted classes take mid-ranks within ties. Every unvoted class shares
    rank ``V + 1``, ``V`` being the number of voted classes, so with no
    votes at all every class is rank 1.
    """
    nontarget = drop_target(np.asarray(counts), target)
    ranks = rankdata(-nontarget, method="average", axis=-1)
    voted = nontarget > 0
    tail = voted.sum(axis=-1, keepdims=True) + 1.0
    return np.where(voted, ranks, tail)


def dense_rank(maps: Sequence[np.ndarray], target) -> np.ndarray:
    """:func:`dense_votes` followed by :func:`votes_to_ranks`."""
    return votes_to_ranks(dense_votes(maps, target), target)


__all__ = ["RANKING_MODES", "logit_rank", "dense_votes", "votes_to_ranks", "dense_rank"]
