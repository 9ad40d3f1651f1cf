"""Command-line entry point: train, evaluate, compare, analyze, labelgen.

Exit status is 0 on success, 1 on usage errors and 2 on runtime errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from ._classes import ConfigError
from .analysis import emit_profile_csv, fit_power_law, sorted_softmax_mean
from .data import load_cifar100, normalize
from .distributions import zipf_weights
from .nn import load_checkpoint
from .ranking import RANKING_MODES, logit_rank
from .trainer import DISTS, TrainConfig, compare, evaluate, load_data, train


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="zipfls", description="Zipf's label smoothing on a small numpy CNN.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("train", help="train one model from a JSON config")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--ranking", choices=RANKING_MODES + ("none",))
    p.add_argument("--dist", choices=DISTS)
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--out", type=Path, default=Path("runs/latest"))

    p = sub.add_parser("evaluate", help="top-1 accuracy of a checkpoint")
    p.add_argument("--ckpt", required=True, type=Path)
    p.add_argument("--data", required=True, type=Path, help="CIFAR-format .bin file, or a train config .json")

    p = sub.add_parser("compare", help="mean/std top-1 over seeds for several configs")
    p.add_argument("--configs", required=True, nargs="+", type=Path)
    p.add_argument("--seeds", type=int, default=1)
    p.add_argument("--out", type=Path, default=Path("comparison.csv"))
    p.add_argument("--workers", type=int)

    p = sub.add_parser("analyze", help="sorted-softmax profile and power-law fit")
    p.add_argument("--ckpt", required=True, type=Path)
    p.add_argument("--data", required=True, type=Path, help="CIFAR-format .bin file, or a train config .json")
    p.add_argument("--fit-min", type=int, default=2)
    p.add_argument("--fit-max", type=int)
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("labelgen", help="print logit ranks and the Zipf label for one sample")
    p.add_argument("--logits", required=True, type=Path, help="JSON list or whitespace/comma separated numbers")
    p.add_argument("--target", required=True, type=int)
    p.add_argument("--alpha", type=float, default=1.0)
    return parser


def _read_config(path: Path) -> TrainConfig:
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"--config {path}: invalid JSON ({exc})") from exc
    try:
        return TrainConfig.from_dict(raw)
    except (ConfigError, TypeError) as exc:
        raise UsageError(f"--config {path}: {exc}") from exc


def _read_eval_data(path: Path, num_classes: int):
    if path.suffix == ".json":
        cfg = _read_config(path)
        if cfg.num_classes != num_classes:
            raise ConfigError(f"--data {path}: {cfg.num_classes} classes, checkpoint has {num_classes}")
        return load_data(cfg)[1]
    return load_cifar100(path, num_classes)


def _cmd_train(args) -> int:
    cfg = _read_config(args.config)
    overrides = {k: getattr(args, k) for k in ("lam", "alpha", "beta", "ranking", "dist", "seed", "epochs")}
    cfg = cfg.replace(**{k: v for k, v in overrides.items() if v is not None})
    try:
        cfg.validate()
    except ConfigError as exc:
        raise UsageError(str(exc)) from exc
    report = train(cfg, args.out).report
    print(json.dumps({"method": cfg.method, "final_top1": report.final_top1, "profile_alpha_hat": report.profile_alpha_hat, "out": str(args.out)}))
    return 0


def _cmd_evaluate(args) -> int:
    model, extra = load_checkpoint(args.ckpt)
    dataset = _read_eval_data(args.data, model.num_classes)
    print(f"top1 {evaluate(model, dataset, extra['norm_mean'], extra['norm_std']):.4f}")
    return 0


def _cmd_compare(args) -> int:
    if args.seeds < 1:
        raise UsageError("--seeds must be >= 1")
    configs = [_read_config(p) for p in args.configs]
    rows = compare(configs, args.seeds, args.out, args.workers)
    for row in rows:
        print(f"{row['method']}: {row['mean_top1']:.2f} +- {row['std_top1']:.2f}")
    return 0


def _cmd_analyze(args) -> int:
    model, extra = load_checkpoint(args.ckpt)
    dataset = _read_eval_data(args.data, model.num_classes)
    x = normalize(dataset.images, extra["norm_mean"], extra["norm_std"])
    profile = sorted_softmax_mean(model, x)
    fit_max = args.fit_max if args.fit_max is not None else min(model.num_classes, 100)
    try:
        fit = fit_power_law(profile, (args.fit_min, fit_max))
    except ValueError as exc:
        raise UsageError(f"--fit-min/--fit-max: {exc}") from exc
    emit_profile_csv(profile, fit, args.out)
    print(f"alpha_hat {fit.alpha_hat:.6f} r2 {fit.r2:.6f} ranks {fit.rank_range[0]}..{fit.rank_range[1]}")
    return 0


def _cmd_labelgen(args) -> int:
    text = args.logits.read_text().strip()
    try:
        logits = np.asarray(json.loads(text), dtype=np.float64)
    except json.JSONDecodeError:
        logits = np.array(text.replace(",", " ").split(), dtype=np.float64)
    if logits.ndim != 1:
        raise UsageError("--logits must hold a single vector")
    if not 0 <= args.target < len(logits):
        raise UsageError(f"--target {args.target} outside [0, {len(logits)})")
    if args.alpha < 0:
        raise UsageError("--alpha must be >= 0")
    ranks = logit_rank(logits, args.target)
    label = zipf_weights(ranks, args.alpha)
    print("ranks", json.dumps([float(r) for r in ranks]))
    print("label", json.dumps([float(p) for p in label]))
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "compare": _cmd_compare,
    "analyze": _cmd_analyze,
    "labelgen": _cmd_labelgen,
}


def run(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_help())
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(str(exc).rstrip(), file=sys.stderr)
        return 1
    except (OSError, ValueError, RuntimeError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


__all__ = ["run", "main"]
