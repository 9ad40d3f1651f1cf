"""CIFAR-100 binary records, a synthetic stand-in dataset, and augmentation."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

RECORD_BYTES = 3074
CIFAR_FINE = 100
CIFAR_COARSE = 20


class CorruptFileError(ValueError):
    pass


@dataclass
class Dataset:
    """Images as uint8 ``(N, 3, H, W)`` with fine (and optionally coarse) labels."""

    images: np.ndarray
    labels: np.ndarray
    num_classes: int
    coarse: np.ndarray | None = None

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise ValueError("images and labels differ in length")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError(f"labels outside [0, {self.num_classes})")

    def __len__(self) -> int:
        return len(self.labels)


def load_cifar100(path, num_classes: int = CIFAR_FINE) -> Dataset:
    """Parse a CIFAR-100 binary file (``train.bin`` / ``test.bin``).

    Each record: coarse label byte, fine label byte, 3072 pixel bytes as
    R, G, B planes of 32x32 in row-major order. ``num_classes`` lowers the
    fine-label bound for files holding fewer classes.
    """
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size == 0 or raw.size % RECORD_BYTES:
        raise CorruptFileError(f"{path}: size {raw.size} is not a positive multiple of {RECORD_BYTES}")
    records = raw.reshape(-1, RECORD_BYTES)
    coarse = records[:, 0].astype(np.int64)
    fine = records[:, 1].astype(np.int64)
    if fine.max() >= num_classes:
        raise CorruptFileError(f"{path}: fine label {fine.max()} >= {num_classes}")
    if coarse.max() >= CIFAR_COARSE:
        raise CorruptFileError(f"{path}: coarse label {coarse.max()} >= {CIFAR_COARSE}")
    images = records[:, 2:].reshape(-1, 3, 32, 32).copy()
    return Dataset(images, fine, num_classes, coarse)


def encode_cifar100(dataset: Dataset) -> bytes:
    images = np.asarray(dataset.images)
    if images.shape[1:] != (3, 32, 32) or images.dtype != np.uint8:
        raise ValueError(f"CIFAR records need uint8 (N, 3, 32, 32) images, got {images.dtype} {images.shape}")
    if dataset.num_classes > 256:
        raise ValueError("labels must fit in one byte")
    coarse = dataset.coarse if dataset.coarse is not None else np.zeros(len(dataset), dtype=np.int64)
    records = np.empty((len(dataset), RECORD_BYTES), dtype=np.uint8)
    records[:, 0] = coarse
    records[:, 1] = dataset.labels
    records[:, 2:] = images.reshape(len(dataset), -1)
    return records.tobytes()


def save_cifar100(dataset: Dataset, path) -> None:
    Path(path).write_bytes(encode_cifar100(dataset))


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of the synthetic class-template dataset.

    Classes are grouped into ``superclasses`` groups; every class template
    is its group's base pattern plus a weaker class-specific pattern, so
    classes of one group look alike. ``seed`` fixes the templates and the
    noise of every split.
    """

    num_classes: int = 10
    superclasses: int = 2
    samples_per_class: int = 500
    seed: int = 0
    noise: float = 40.0
    image_size: int = 32
    test_per_class: int = 100
    base_amplitude: float = 40.0
    class_amplitude: float = 20.0
    smoothness: float = 2.0

    def __post_init__(self):
        if self.num_classes % self.superclasses:
            raise ValueError("num_classes must be divisible by superclasses")


def _smooth_field(rng: np.random.Generator, size: int, sigma: float) -> np.ndarray:
    field = gaussian_filter(rng.standard_normal((3, size, size)), sigma=(0, sigma, sigma), mode="wrap")
    return field / field.std()


def synthetic_templates(spec: SyntheticSpec) -> np.ndarray:
    """Float class templates ``(K, 3, S, S)`` before noise and clipping."""
    rng = np.random.default_rng(spec.seed)
    size = spec.image_size
    bases = [_smooth_field(rng, size, spec.smoothness) for _ in range(spec.superclasses)]
    per_group = spec.num_classes // spec.superclasses
    templates = np.empty((spec.num_classes, 3, size, size))
    for k in range(spec.num_classes):
        offset = _smooth_field(rng, size, spec.smoothness)
        templates[k] = 128.0 + spec.base_amplitude * bases[k // per_group] + spec.class_amplitude * offset
    return templates


def gen_synthetic(spec: SyntheticSpec, split: str = "train") -> Dataset:
    """Template plus Gaussian pixel noise, clipped to uint8; deterministic."""
    if split not in ("train", "test"):
        raise ValueError(f"split must be 'train' or 'test', got {split!r}")
    per_class = spec.samples_per_class if split == "train" else spec.test_per_class
    templates = synthetic_templates(spec)
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 0 if split == "train" else 1]))
    labels = np.repeat(np.arange(spec.num_classes), per_class)
    rng.shuffle(labels)
    noisy = templates[labels] + spec.noise * rng.standard_normal((len(labels),) + templates.shape[1:])
    images = np.clip(np.rint(noisy), 0, 255).astype(np.uint8)
    coarse = labels // (spec.num_classes // spec.superclasses)
    return Dataset(images, labels.astype(np.int64), spec.num_classes, coarse.astype(np.int64))


def crop_flip(image: np.ndarray, dy: int, dx: int, flip: bool, pad: int = 4) -> np.ndarray:
    """Reflect-pad by ``pad``, crop at offset ``(dy, dx)``, optionally mirror."""
    _, h, w = image.shape
    padded = np.pad(image, ((0, 0), (pad, pad), (pad, pad)), mode="reflect")
    out = padded[:, dy : dy + h, dx : dx + w]
    return np.ascontiguousarray(out[:, :, ::-1] if flip else out)


def augment(image: np.ndarray, rng: np.random.Generator, pad: int = 4) -> np.ndarray:
    """Random pad-and-crop then a coin-flip horizontal mirror."""
    dy, dx = rng.integers(0, 2 * pad + 1, size=2)
    return crop_flip(image, int(dy), int(dx), bool(rng.random() < 0.5), pad)


def augment_batch(images: np.ndarray, rng: np.random.Generator, pad: int = 4) -> np.ndarray:
    """:func:`augment` applied to every image of ``(N, 3, H, W)``."""
    n, _, h, w = images.shape
    offsets = rng.integers(0, 2 * pad + 1, size=(n, 2))
    flips = rng.random(n) < 0.5
    padded = np.pad(images, ((0, 0), (0, 0), (pad, pad), (pad, pad)), mode="reflect")
    out = np.empty_like(images)
    for i in range(n):
        dy, dx = offsets[i]
        crop = padded[i, :, dy : dy + h, dx : dx + w]
        out[i] = crop[:, :, ::-1] if flips[i] else crop
    return out


def channel_stats(images: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel mean and std of uint8 images scaled to [0, 1]."""
    x = images.astype(np.float64) / 255.0
    return x.mean(axis=(0, 2, 3)), x.std(axis=(0, 2, 3))


def normalize(images: np.ndarray, mean: np.ndarray, std: np.ndarray, dtype=np.float32) -> np.ndarray:
    x = images.astype(dtype) / dtype(255.0)
    return (x - np.asarray(mean, dtype)[:, None, None]) / np.asarray(std, dtype)[:, None, None]


def batch_order(n: int, epoch_seed: int) -> np.ndarray:
    """Sample order for one epoch, a function of ``epoch_seed`` only."""
    return np.random.default_rng(epoch_seed).permutation(n)


__all__ = [
    "CorruptFileError",
    "Dataset",
    "load_cifar100",
    "encode_cifar100",
    "save_cifar100",
    "SyntheticSpec",
    "synthetic_templates",
    "gen_synthetic",
    "crop_flip",
    "augment",
    "augment_batch",
    "channel_stats",
    "normalize",
    "batch_order",
]
