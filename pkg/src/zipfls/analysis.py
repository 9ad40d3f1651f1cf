"""Sorted-softmax profiles and log-log power-law fits."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .losses import softmax


@dataclass
class SortedProfile:
    mean_sorted: np.ndarray
    sample_count: int


@dataclass
class PowerLawFit:
    alpha_hat: float
    intercept: float
    r2: float
    rank_range: tuple[int, int]

    def predict(self, ranks) -> np.ndarray:
        return np.exp(self.intercept) * np.asarray(ranks, dtype=np.float64) ** -self.alpha_hat


def sorted_profile(probs) -> SortedProfile:
    """Mean over rows of each probability row sorted in descending order."""
    probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    if probs.shape[0] == 0:
        raise ValueError("empty dataset")
    ordered = -np.sort(-probs, axis=1)
    return SortedProfile(ordered.mean(axis=0), probs.shape[0])


def sorted_softmax_mean(model, images: np.ndarray, batch_size: int = 256) -> SortedProfile:
    """Profile of ``softmax(pooled logits)`` over normalized ``images``.

    The model is switched to eval mode and left there.
    """
    if len(images) == 0:
        raise ValueError("empty dataset")
    model.eval()
    chunks = []
    for start in range(0, len(images), batch_size):
        taps = model.forward(images[start : start + batch_size], taps=False, cache=False)
        chunks.append(softmax(taps.pooled_logits))
    return sorted_profile(np.concatenate(chunks))


def default_fit_range(num_classes: int) -> tuple[int, int]:
    return (2, min(num_classes, 100))


def fit_power_law(profile: SortedProfile | np.ndarray, rank_range: tuple[int, int] | None = None) -> PowerLawFit:
    """OLS of ``log f(r)`` on ``log r`` over ranks ``r_min..r_max`` (1-based, inclusive).

    ``alpha_hat`` is minus the slope. When the target has zero variance the
    r2 is 1 if the residuals are exactly zero, else 0.
    """
    f = np.asarray(getattr(profile, "mean_sorted", profile), dtype=np.float64)
    if rank_range is None:
        rank_range = default_fit_range(len(f))
    r_min, r_max = (int(v) for v in rank_range)
    if r_min < 1 or r_max > len(f) or r_max - r_min < 1:
        raise ValueError(f"rank range {rank_range} invalid for {len(f)} ranks (need 1 <= r_min < r_max <= {len(f)})")
    ranks = np.arange(r_min, r_max + 1, dtype=np.float64)
    window = f[r_min - 1 : r_max]
    if np.any(window <= 0):
        first = r_min + int(np.argmax(window <= 0))
        raise ValueError(f"profile entry at rank {first} is not positive; use r_max < {first}")
    x, y = np.log(ranks), np.log(window)
    xc, yc = x - x.mean(), y - y.mean()
    slope = (xc @ yc) / (xc @ xc)
    intercept = y.mean() - slope * x.mean()
    ss_res = float(np.sum((y - (intercept + slope * x)) ** 2))
    ss_tot = float(yc @ yc)
    if ss_tot == 0.0:
        r2 = 1.0 if ss_res == 0.0 else 0.0
    else:
        r2 = min(max(1.0 - ss_res / ss_tot, 0.0), 1.0)
    return PowerLawFit(float(-slope), float(intercept), r2, (r_min, r_max))


def emit_profile_csv(profile: SortedProfile, fit: PowerLawFit, path) -> None:
    """CSV with header ``rank,mean_prob,fit_prob``, one row per rank."""
    ranks = np.arange(1, len(profile.mean_sorted) + 1)
    fitted = fit.predict(ranks)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rank", "mean_prob", "fit_prob"])
        for r, p, q in zip(ranks, profile.mean_sorted, fitted):
            writer.writerow([int(r), repr(float(p)), repr(float(q))])


__all__ = [
    "SortedProfile",
    "PowerLawFit",
    "sorted_profile",
    "sorted_softmax_mean",
    "default_fit_range",
    "fit_power_law",
    "emit_profile_csv",
]
