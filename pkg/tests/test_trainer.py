import json

import numpy as np
import pytest

from zipfls import ConfigError
from zipfls import data as data_mod
from zipfls.losses import ce_loss
from zipfls.nn import MiniNet, load_checkpoint
from zipfls.optim import SGD, StepSchedule, lr_at
from zipfls.trainer import TrainConfig, batch_loss, compare, evaluate, evaluate_checkpoint, load_data, soft_labels, train

TINY = TrainConfig(
    seed=3,
    num_classes=4,
    superclasses=2,
    samples_per_class=20,
    test_per_class=5,
    image_size=8,
    pad=1,
    widths=(4, 8, 8),
    epochs=3,
    milestones=(2,),
    batch_size=16,
    noise=30.0,
)


def vanilla_reference(cfg):
    """Plain CE training written out step by step, sharing only the seeding scheme."""
    train_set, test_set = load_data(cfg)
    init_ss, aug_ss, order_ss, _ = np.random.SeedSequence(cfg.seed).spawn(4)
    model = MiniNet(cfg.num_classes, cfg.widths, seed=int(init_ss.generate_state(1)[0]))
    opt = SGD(model.params, cfg.momentum, cfg.weight_decay)
    aug_rng = np.random.default_rng(aug_ss)
    epoch_seeds = order_ss.generate_state(cfg.epochs)
    mean, std = data_mod.channel_stats(train_set.images)
    for epoch in range(cfg.epochs):
        model.train()
        order = data_mod.batch_order(len(train_set), int(epoch_seeds[epoch]))
        for lo in range(0, len(train_set), cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            x = data_mod.normalize(data_mod.augment_batch(train_set.images[idx], aug_rng, cfg.pad), mean, std)
            logits = model.forward(x, taps=False).pooled_logits
            grad = ce_loss(logits, train_set.labels[idx]).grad
            opt.step(model.backward(grad / len(idx)), lr_at(epoch, StepSchedule(list(cfg.milestones)), cfg.lr))
    return model


def test_lambda_zero_is_bitwise_vanilla():
    cfg = TINY.replace(lam=0.0, dist="zipf", ranking="dense12")
    ours = train(cfg).model
    ref = vanilla_reference(cfg)
    for k in ref.params:
        np.testing.assert_array_equal(ours.params[k], ref.params[k])


def test_training_is_deterministic():
    a = train(TINY)
    b = train(TINY)
    assert a.report.train_loss == b.report.train_loss
    for k in a.model.params:
        np.testing.assert_array_equal(a.model.params[k], b.model.params[k])


def test_one_forward_one_backward_per_batch():
    rep = train(TINY).report
    assert rep.train_batches == 3 * 5
    assert rep.train_forward_calls == rep.train_backward_calls == rep.train_batches


def test_artifacts_and_config_echo(tmp_path):
    res = train(TINY.replace(lam=0.5, alpha=1.5), tmp_path)
    cfg = json.loads((tmp_path / "config.json").read_text())
    assert cfg["lambda"] == 0.5 and cfg["alpha"] == 1.5 and cfg["seed"] == 3
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["config"] == cfg
    assert report["profile_alpha_hat"] is not None
    assert len(report["epoch_seconds"]) == 3
    assert (tmp_path / "metrics.csv").read_text().startswith("epoch,train_loss,epoch_seconds")
    model, extra = load_checkpoint(tmp_path / "checkpoint.bin")
    test_set = load_data(TINY)[1]
    assert evaluate_checkpoint(tmp_path / "checkpoint.bin", test_set) == pytest.approx(res.report.final_top1)
    assert set(extra) == {"norm_mean", "norm_std"}


def test_config_round_trip_and_unknown_keys():
    d = TINY.to_dict()
    assert "lambda" in d and "lam" not in d
    assert TrainConfig.from_dict(d) == TINY
    with pytest.raises(ConfigError, match="unknown"):
        TrainConfig.from_dict({"seed": 1, "lamda": 2})


@pytest.mark.parametrize(
    "change",
    [
        {"seed": None},
        {"dist": "gauss"},
        {"ranking": "dense3"},
        {"beta": 1.0},
        {"lam": -1.0},
        {"widths": (4, 8, 16)},
        {"milestones": (5, 2)},
        {"ranking": "none", "dist": "zipf"},
    ],
)
def test_config_validation(change):
    with pytest.raises(ConfigError):
        TINY.replace(**change).validate()


def test_method_labels():
    assert TINY.replace(lam=0.0).method == "vanilla"
    assert TINY.replace(dist="ls").method == "ls(beta=0.1)"
    assert TINY.method == "zipf-dense12-a1-l1"
    assert TINY.replace(name="mine").method == "mine"


def test_soft_labels_from_dense_taps():
    model = MiniNet(4, (4, 8, 8), seed=0)
    x = np.random.default_rng(0).normal(size=(6, 3, 8, 8)).astype(np.float32)
    taps = model.forward(x)
    y = np.array([0, 1, 2, 3, 0, 1])
    labels = soft_labels(TINY, taps, y, np.random.default_rng(0))
    assert labels.shape == (6, 3)
    np.testing.assert_allclose(labels.sum(axis=1), 1.0, atol=1e-12)
    res = batch_loss(TINY, taps, y, np.random.default_rng(0))
    np.testing.assert_array_equal(np.take_along_axis(res.grad, y[:, None], 1)[:, 0], ce_loss(taps.pooled_logits, y).grad[np.arange(6), y])


@pytest.mark.parametrize("dist", ["constant", "rand-uniform", "rand-pareto", "linear", "ls"])
def test_every_dist_trains(dist):
    rep = train(TINY.replace(dist=dist, ranking="logit", epochs=1)).report
    assert np.isfinite(rep.train_loss[0])


def test_evaluate_class_mismatch():
    test_set = load_data(TINY)[1]
    with pytest.raises(ConfigError):
        evaluate(MiniNet(5, (4, 8, 8)), test_set, np.zeros(3), np.ones(3))


def test_compare_single_seed_std_zero(tmp_path):
    rows = compare([TINY.replace(epochs=1), TINY.replace(epochs=1, lam=0.0)], seeds=1, out_csv=tmp_path / "c.csv", workers=1)
    assert [r["std_top1"] for r in rows] == [0.0, 0.0]
    assert rows[1]["method"] == "vanilla"
    assert rows[0]["reports"][0].config["seed"] == 3
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "method,mean_top1,std_top1,seeds,runs" and len(lines) == 3


def test_compare_seed_offsets():
    rows = compare([TINY.replace(epochs=1)], seeds=2, workers=1)
    assert [r.config["seed"] for r in rows[0]["reports"]] == [3, 4]
    assert rows[0]["std_top1"] == pytest.approx(float(np.std(rows[0]["runs"], ddof=1)))
