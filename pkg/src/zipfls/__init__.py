"""Zipf's label smoothing: rank-based soft labels for self-distillation."""

from ._classes import ConfigError
from .analysis import PowerLawFit, SortedProfile, emit_profile_csv, fit_power_law, sorted_profile, sorted_softmax_mean
from .distributions import make_distribution, zipf_weights
from .losses import LossResult, ce_loss, ls_loss, nontarget_softmax, total_loss, zipf_loss
from .nn import ForwardTaps, MiniNet, load_checkpoint, save_checkpoint
from .optim import SGD, StepSchedule, lr_at, sgd_step
from .ranking import dense_rank, dense_votes, logit_rank, votes_to_ranks
from .trainer import RunReport, TrainConfig, compare, evaluate, train

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "PowerLawFit",
    "SortedProfile",
    "emit_profile_csv",
    "fit_power_law",
    "sorted_profile",
    "sorted_softmax_mean",
    "make_distribution",
    "zipf_weights",
    "LossResult",
    "ce_loss",
    "ls_loss",
    "nontarget_softmax",
    "total_loss",
    "zipf_loss",
    "ForwardTaps",
    "MiniNet",
    "load_checkpoint",
    "save_checkpoint",
    "SGD",
    "StepSchedule",
    "lr_at",
    "sgd_step",
    "dense_rank",
    "dense_votes",
    "logit_rank",
    "votes_to_ranks",
    "RunReport",
    "TrainConfig",
    "compare",
    "evaluate",
    "train",
]
