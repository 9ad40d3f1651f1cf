"""Training loop for vanilla CE, uniform LS and Zipf's label smoothing.

One step: forward (with dense taps when the ranking needs them), rank the
non-target classes from that same forward pass, build the soft label,
evaluate the loss, one backward, one SGD step. Nothing is stored across
steps besides the model and optimizer state.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import data as data_mod
from ._classes import ConfigError
from .analysis import default_fit_range, fit_power_law, sorted_softmax_mean
from .distributions import KINDS, make_distribution
from .losses import LossResult, ce_loss, ls_loss, total_loss
from .nn import MiniNet, load_checkpoint, save_checkpoint
from .optim import SGD, StepSchedule, lr_at
from .ranking import RANKING_MODES, dense_rank, logit_rank

log = logging.getLogger(__name__)

DISTS = KINDS + ("ls",)
# dists whose label does not read the ranks
RANK_FREE = ("constant", "rand-uniform", "ls")


@dataclass
class TrainConfig:
    """Flat training configuration; JSON keys equal field names except ``lambda``."""

    seed: int | None = None
    name: str = ""
    # data
    dataset: str = "synthetic"
    data_dir: str = ""
    num_classes: int = 10
    superclasses: int = 2
    samples_per_class: int = 500
    test_per_class: int = 100
    noise: float = 40.0
    image_size: int = 32
    data_seed: int = 0
    augment: bool = True
    pad: int = 4
    # model and optimization
    widths: tuple = (16, 32, 32)
    epochs: int = 200
    batch_size: int = 128
    lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 1e-4
    milestones: tuple = (100, 150)
    # method
    dist: str = "zipf"
    ranking: str = "dense12"
    alpha: float = 1.0
    lam: float = 1.0
    beta: float = 0.1
    pareto_shape: float = 1.0
    eval_every: int = 1

    def __post_init__(self):
        self.widths = tuple(int(w) for w in self.widths)
        self.milestones = tuple(int(m) for m in self.milestones)

    def validate(self) -> TrainConfig:
        if self.seed is None:
            raise ConfigError("seed is mandatory")
        if self.dist not in DISTS:
            raise ConfigError(f"dist must be one of {DISTS}, got {self.dist!r}")
        if self.ranking not in RANKING_MODES + ("none",):
            raise ConfigError(f"ranking must be one of {RANKING_MODES + ('none',)}, got {self.ranking!r}")
        if self.ranking == "none" and self.dist not in RANK_FREE and self.lam > 0:
            raise ConfigError(f"dist {self.dist!r} needs a ranking")
        if self.dataset not in ("synthetic", "cifar100"):
            raise ConfigError(f"dataset must be 'synthetic' or 'cifar100', got {self.dataset!r}")
        if self.dataset == "cifar100" and self.num_classes != data_mod.CIFAR_FINE:
            raise ConfigError("cifar100 needs num_classes = 100")
        if self.alpha < 0 or self.lam < 0 or not 0 <= self.beta < 1:
            raise ConfigError("need alpha >= 0, lambda >= 0, 0 <= beta < 1")
        if len(self.widths) != 3 or self.widths[1] != self.widths[2]:
            raise ConfigError(f"widths must be three values with stage 2 == stage 3, got {self.widths}")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")
        try:
            StepSchedule(list(self.milestones))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return self

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["lambda"] = out.pop("lam")
        out["widths"] = list(self.widths)
        out["milestones"] = list(self.milestones)
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> TrainConfig:
        raw = dict(raw)
        if "lambda" in raw:
            raw["lam"] = raw.pop("lambda")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**raw)

    def replace(self, **changes) -> TrainConfig:
        return dataclasses.replace(self, **changes)

    @property
    def method(self) -> str:
        if self.name:
            return self.name
        if self.dist == "ls":
            return f"ls(beta={self.beta:g})"
        if self.lam == 0:
            return "vanilla"
        return f"{self.dist}-{self.ranking}-a{self.alpha:g}-l{self.lam:g}"


@dataclass
class RunReport:
    config: dict
    train_loss: list[float] = field(default_factory=list)
    eval_top1: list[float] = field(default_factory=list)
    epoch_seconds: list[float] = field(default_factory=list)
    final_top1: float = float("nan")
    wall_time: float = 0.0
    train_batches: int = 0
    train_forward_calls: int = 0
    train_backward_calls: int = 0
    profile_alpha_hat: float | None = None
    profile_r2: float | None = None
    profile_fit_range: list[int] | None = None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class TrainResult:
    report: RunReport
    model: MiniNet
    mean: np.ndarray
    std: np.ndarray


def load_data(cfg: TrainConfig) -> tuple[data_mod.Dataset, data_mod.Dataset]:
    if cfg.dataset == "cifar100":
        root = Path(cfg.data_dir)
        return data_mod.load_cifar100(root / "train.bin"), data_mod.load_cifar100(root / "test.bin")
    spec = data_mod.SyntheticSpec(
        num_classes=cfg.num_classes,
        superclasses=cfg.superclasses,
        samples_per_class=cfg.samples_per_class,
        test_per_class=cfg.test_per_class,
        seed=cfg.data_seed,
        noise=cfg.noise,
        image_size=cfg.image_size,
    )
    return data_mod.gen_synthetic(spec, "train"), data_mod.gen_synthetic(spec, "test")


def soft_labels(cfg: TrainConfig, taps, targets: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Per-sample soft labels ``(N, C-1)`` from the current forward pass."""
    if cfg.ranking == "logit":
        ranks = logit_rank(taps.pooled_logits, targets)
    elif cfg.ranking == "dense1":
        ranks = dense_rank([taps.dense1], targets)
    elif cfg.ranking == "dense12":
        ranks = dense_rank([taps.dense1, taps.dense2], targets)
    else:
        ranks = np.ones((len(targets), taps.pooled_logits.shape[1] - 1))
    return make_distribution(cfg.dist, ranks, alpha=cfg.alpha, seed=rng, pareto_shape=cfg.pareto_shape)


def batch_loss(cfg: TrainConfig, taps, targets: np.ndarray, rng: np.random.Generator) -> LossResult:
    logits = taps.pooled_logits
    if cfg.dist == "ls":
        return ls_loss(logits, targets, cfg.beta)
    if cfg.lam == 0:
        return ce_loss(logits, targets)
    return total_loss(logits, targets, soft_labels(cfg, taps, targets, rng), cfg.lam)


def uses_labels(cfg: TrainConfig) -> bool:
    return cfg.dist != "ls" and cfg.lam > 0


def evaluate(model: MiniNet, dataset: data_mod.Dataset, mean, std, batch_size: int = 500) -> float:
    """Top-1 accuracy (%) of the pooled logits; ties go to the lowest class id."""
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    if dataset.num_classes != model.num_classes:
        raise ConfigError(f"dataset has {dataset.num_classes} classes, model has {model.num_classes}")
    was_training = model.training
    model.eval()
    correct = 0
    for start in range(0, len(dataset), batch_size):
        x = data_mod.normalize(dataset.images[start : start + batch_size], mean, std, model.dtype.type)
        logits = model.forward(x, taps=False, cache=False).pooled_logits
        correct += int((logits.argmax(axis=1) == dataset.labels[start : start + batch_size]).sum())
    model.train(was_training)
    return 100.0 * correct / len(dataset)


def evaluate_checkpoint(path, dataset: data_mod.Dataset) -> float:
    model, extra = load_checkpoint(path)
    return evaluate(model, dataset, extra["norm_mean"], extra["norm_std"])


def train(
    cfg: TrainConfig,
    out_dir=None,
    datasets: tuple[data_mod.Dataset, data_mod.Dataset] | None = None,
) -> TrainResult:
    """Train one model; deterministic given ``cfg`` (and the datasets).

    Writes ``config.json``, ``report.json``, ``metrics.csv`` and
    ``checkpoint.bin`` into ``out_dir`` when given.
    """
    cfg.validate()
    start = time.perf_counter()
    train_set, test_set = datasets if datasets is not None else load_data(cfg)
    if train_set.num_classes != cfg.num_classes or test_set.num_classes != cfg.num_classes:
        raise ConfigError("dataset class count does not match config num_classes")
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2))

    init_ss, aug_ss, order_ss, label_ss = np.random.SeedSequence(cfg.seed).spawn(4)
    model = MiniNet(cfg.num_classes, cfg.widths, seed=int(init_ss.generate_state(1)[0]))
    opt = SGD(model.params, cfg.momentum, cfg.weight_decay)
    schedule = StepSchedule(list(cfg.milestones))
    aug_rng = np.random.default_rng(aug_ss)
    label_rng = np.random.default_rng(label_ss)
    epoch_seeds = order_ss.generate_state(max(cfg.epochs, 1))
    mean, std = data_mod.channel_stats(train_set.images)
    fixed_inputs = None if cfg.augment else data_mod.normalize(train_set.images, mean, std)
    need_taps = uses_labels(cfg) and cfg.ranking in ("dense1", "dense12")

    report = RunReport(config=cfg.to_dict())
    n = len(train_set)
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        model.train()
        lr = lr_at(epoch, schedule, cfg.lr)
        order = data_mod.batch_order(n, int(epoch_seeds[epoch]))
        losses = []
        for b, lo in enumerate(range(0, n, cfg.batch_size)):
            idx = order[lo : lo + cfg.batch_size]
            if fixed_inputs is not None:
                x = fixed_inputs[idx]
            else:
                x = data_mod.normalize(data_mod.augment_batch(train_set.images[idx], aug_rng, cfg.pad), mean, std)
            targets = train_set.labels[idx]
            fwd, bwd = model.forward_calls, model.backward_calls
            taps = model.forward(x, taps=need_taps)
            res = batch_loss(cfg, taps, targets, label_rng)
            if not np.all(np.isfinite(res.value)):
                raise FloatingPointError(f"non-finite loss at epoch {epoch}, batch {b}")
            opt.step(model.backward(res.grad / len(idx)), lr)
            report.train_batches += 1
            report.train_forward_calls += model.forward_calls - fwd
            report.train_backward_calls += model.backward_calls - bwd
            losses.append(float(res.value.mean()))
        report.epoch_seconds.append(time.perf_counter() - t0)
        report.train_loss.append(float(np.mean(losses)))
        if (epoch + 1) % cfg.eval_every == 0 or epoch == cfg.epochs - 1:
            report.eval_top1.append(evaluate(model, test_set, mean, std))
            log.info("%s seed %s epoch %d: loss %.4f top1 %.2f", cfg.method, cfg.seed, epoch, report.train_loss[-1], report.eval_top1[-1])

    report.final_top1 = evaluate(model, test_set, mean, std)
    model.eval()
    fit_range = default_fit_range(cfg.num_classes)
    if fit_range[1] > fit_range[0]:
        x_test = data_mod.normalize(test_set.images, mean, std)
        try:
            fit = fit_power_law(sorted_softmax_mean(model, x_test), fit_range)
            report.profile_alpha_hat, report.profile_r2 = fit.alpha_hat, fit.r2
            report.profile_fit_range = list(fit.rank_range)
        except ValueError as exc:
            log.warning("profile fit skipped: %s", exc)
    report.wall_time = time.perf_counter() - start

    if out_dir is not None:
        save_checkpoint(model, out_dir / "checkpoint.bin", {"norm_mean": mean, "norm_std": std})
        (out_dir / "report.json").write_text(json.dumps(report.to_dict(), indent=2))
        with open(out_dir / "metrics.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "train_loss", "epoch_seconds"])
            for e, (loss, sec) in enumerate(zip(report.train_loss, report.epoch_seconds)):
                writer.writerow([e, loss, sec])
    return TrainResult(report, model, mean, std)


def _run_seed(cfg: TrainConfig) -> RunReport:
    return train(cfg).report


def max_workers() -> int:
    env = os.environ.get("ZIPFLS_THREADS")
    cap = int(env) if env else (os.cpu_count() or 1)
    return max(cap, 1)


def compare(configs: list[TrainConfig], seeds: int = 1, out_csv=None, workers: int | None = None) -> list[dict]:
    """Run every config over ``seeds`` consecutive seeds; mean and std of top-1 per method.

    Seed ``s`` of a config runs with ``config.seed + s``. The std is the
    sample std (ddof=1), 0 for a single seed. Each row also carries the
    per-seed :class:`RunReport` list under ``reports``.
    """
    if seeds < 1:
        raise ValueError("seeds must be >= 1")
    jobs = [cfg.validate().replace(seed=cfg.seed + s) for cfg in configs for s in range(seeds)]
    workers = min(workers or max_workers(), max_workers(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(_run_seed, jobs))
    else:
        reports = [_run_seed(job) for job in jobs]
    rows = []
    for i, cfg in enumerate(configs):
        mine = reports[i * seeds : (i + 1) * seeds]
        runs = [r.final_top1 for r in mine]
        rows.append(
            {
                "method": cfg.method,
                "mean_top1": float(np.mean(runs)),
                "std_top1": float(np.std(runs, ddof=1)) if seeds > 1 else 0.0,
                "seeds": seeds,
                "runs": runs,
                "reports": mine,
            }
        )
    if out_csv is not None:
        with open(out_csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["method", "mean_top1", "std_top1", "seeds", "runs"])
            for row in rows:
                writer.writerow([row["method"], row["mean_top1"], row["std_top1"], seeds, " ".join(f"{r:.2f}" for r in row["runs"])])
    return rows


__all__ = [
    "DISTS",
    "TrainConfig",
    "RunReport",
    "TrainResult",
    "load_data",
    "soft_labels",
    "batch_loss",
    "evaluate",
    "evaluate_checkpoint",
    "train",
    "compare",
]
