"""SGD with momentum and coupled weight decay, plus a step LR schedule."""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, field

import numpy as np


@dataclass
class StepSchedule:
    milestones: list[int] = field(default_factory=list)
    factor: float = 0.1

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.milestones, self.milestones[1:])):
            raise ValueError(f"milestones must be strictly increasing, got {self.milestones}")


def lr_at(epoch: int, schedule: StepSchedule, base_lr: float) -> float:
    """``base_lr * factor**k`` with ``k`` the number of milestones <= epoch."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    return base_lr * schedule.factor ** bisect_right(schedule.milestones, epoch)


def sgd_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    velocity: dict[str, np.ndarray],
    lr: float,
    momentum: float = 0.9,
    weight_decay: float = 0.0,
) -> None:
    """In-place update: ``v = m*v + (g + wd*p)``, then ``p -= lr*v``.

    Missing velocity buffers are created as zeros.
    """
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"{name}: gradient shape {g.shape} != parameter shape {p.shape}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter {name!r}")
        if weight_decay:
            g = g + weight_decay * p
        v = velocity.get(name)
        if v is None:
            v = velocity[name] = np.zeros_like(p)
        v *= momentum
        v += g
        p -= lr * v


class SGD:
    """Holds velocity buffers for :func:`sgd_step`."""

    def __init__(self, params: dict[str, np.ndarray], momentum: float = 0.9, weight_decay: float = 1e-4):
        self.params = params
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: dict[str, np.ndarray], lr: float) -> None:
        sgd_step(self.params, grads, self.velocity, lr, self.momentum, self.weight_decay)


__all__ = ["StepSchedule", "lr_at", "sgd_step", "SGD"]
