"""A small conv-BN-ReLU classifier with hand-written backprop.

Layout: a 3x3 stem, then three stages of two 3x3 conv-BN-ReLU layers. The
first conv of stages 2 and 3 has stride 2. A single linear classifier is
applied to the global-average-pooled stage-3 map (the logits), and also to
every location of the stage-3 and stage-2 maps (the dense taps). Stages 2
and 3 must share a width so that one classifier fits both maps.

Activations are ``(C, N, H, W)`` internally; the public input is
``(N, 3, H, W)``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._classes import ConfigError

BN_EPS = 1e-5
BN_MOMENTUM = 0.1

CHECKPOINT_MAGIC = b"ZPLS"
CHECKPOINT_VERSION = 1
_HEADER = struct.Struct("<4sIIIII")


@dataclass
class ForwardTaps:
    """Pooled logits ``(N, C)`` plus dense logit maps ``(N, H, W, C)``.

    ``dense1`` comes from the last stage, ``dense2`` from the one before it
    (twice the spatial size). Both are ``None`` when taps were not asked for.
    """

    pooled_logits: np.ndarray
    dense1: np.ndarray | None = None
    dense2: np.ndarray | None = None


_TAPS = [(i, j) for i in range(3) for j in range(3)]


def _conv_forward(x: np.ndarray, w2d: np.ndarray, stride: int) -> tuple[np.ndarray, np.ndarray]:
    """3x3, pad-1 convolution of ``x`` laid out ``(Cin, N, H, W)``.

    The padded batch is flattened per channel so that each kernel tap is a
    contiguous shifted slice; positions falling in the padding are computed
    and then dropped. Stride 2 subsamples the stride-1 result. Returns the
    output ``(Cout, N, Ho, Wo)`` and the column matrix for backward.
    """
    cin, n, h, w = x.shape
    wp = w + 2
    plane = n * (h + 2) * wp
    flat = np.zeros((cin, plane + 2 * wp + 2), dtype=x.dtype)
    flat[:, :plane].reshape(cin, n, h + 2, wp)[:, :, 1 : h + 1, 1 : w + 1] = x
    cols = np.empty((9, cin, plane), dtype=x.dtype)
    for t, (i, j) in enumerate(_TAPS):
        cols[t] = flat[:, i * wp + j : i * wp + j + plane]
    cols = cols.reshape(9 * cin, plane)
    out = (w2d @ cols).reshape(-1, n, h + 2, wp)[:, :, :h:stride, :w:stride]
    return np.ascontiguousarray(out), cols


def _conv_backward(
    dout: np.ndarray, cols: np.ndarray, w2d: np.ndarray, in_shape: tuple, stride: int, need_input: bool = True
) -> tuple[np.ndarray, np.ndarray | None]:
    cin, n, h, w = in_shape
    wp = w + 2
    plane = n * (h + 2) * wp
    cout = dout.shape[0]
    dfull = np.zeros((cout, n, h + 2, wp), dtype=dout.dtype)
    dfull[:, :, :h:stride, :w:stride] = dout
    dfull = dfull.reshape(cout, plane)
    dw2d = dfull @ cols.T
    if not need_input:
        return dw2d, None
    dcols = (w2d.T @ dfull).reshape(9, cin, plane)
    dflat = np.zeros((cin, plane + 2 * wp + 2), dtype=dout.dtype)
    for t, (i, j) in enumerate(_TAPS):
        dflat[:, i * wp + j : i * wp + j + plane] += dcols[t]
    return dw2d, dflat[:, :plane].reshape(cin, n, h + 2, wp)[:, :, 1 : h + 1, 1 : w + 1]


def _as_2d(w: np.ndarray) -> np.ndarray:
    """``(Cout, Cin, 3, 3)`` weights to ``(Cout, 9 * Cin)`` in tap-major order."""
    return w.transpose(0, 2, 3, 1).reshape(w.shape[0], -1)


class MiniNet:
    """Minimal CNN classifier exposing pooled and dense logits.

    Parameters are kept in :attr:`params`, an ordered dict whose order is
    the checkpoint order; conv weights are ``(Cout, Cin, 3, 3)``. BatchNorm
    running statistics live in :attr:`buffers`. ``forward_calls`` and
    ``backward_calls`` count passes.
    """

    def __init__(
        self,
        num_classes: int,
        widths: tuple[int, int, int] = (16, 32, 32),
        *,
        seed: int | None = 0,
        dtype=np.float32,
        in_channels: int = 3,
    ):
        w1, w2, w3 = (int(v) for v in widths)
        if w2 != w3:
            raise ConfigError(f"stage 2 and 3 widths must match for the shared classifier, got {widths}")
        if num_classes < 1:
            raise ConfigError("num_classes must be >= 1")
        self.num_classes = int(num_classes)
        self.widths = (w1, w2, w3)
        self.in_channels = in_channels
        self.dtype = np.dtype(dtype)
        # (name, cin, cout, stride)
        self.convs = [("stem", in_channels, w1, 1)]
        for s, (cin, cout) in enumerate([(w1, w1), (w1, w2), (w2, w3)], start=1):
            self.convs.append((f"s{s}.0", cin, cout, 1 if s == 1 else 2))
            self.convs.append((f"s{s}.1", cout, cout, 1))
        self.params: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}
        rng = np.random.default_rng(seed)
        for name, cin, cout, _ in self.convs:
            # MSRA init, fan-out mode
            std = np.sqrt(2.0 / (9 * cout))
            self.params[f"{name}.w"] = (rng.standard_normal((cout, cin, 3, 3)) * std).astype(self.dtype)
            self.params[f"{name}.gamma"] = np.ones(cout, dtype=self.dtype)
            self.params[f"{name}.beta"] = np.zeros(cout, dtype=self.dtype)
            self.buffers[f"{name}.mean"] = np.zeros(cout, dtype=self.dtype)
            self.buffers[f"{name}.var"] = np.ones(cout, dtype=self.dtype)
        self.params["fc.w"] = (rng.standard_normal((w3, self.num_classes)) * 0.01).astype(self.dtype)
        self.params["fc.b"] = np.zeros(self.num_classes, dtype=self.dtype)
        self.training = True
        self.forward_calls = 0
        self.backward_calls = 0
        self._cache: dict | None = None

    def train(self, mode: bool = True) -> MiniNet:
        self.training = mode
        return self

    def eval(self) -> MiniNet:
        return self.train(False)

    def _bn_relu(self, name: str, x: np.ndarray, cache: dict | None) -> np.ndarray:
        c = x.shape[0]
        flat = x.reshape(c, -1)
        gamma = self.params[f"{name}.gamma"][:, None]
        beta = self.params[f"{name}.beta"][:, None]
        if self.training:
            m = flat.shape[1]
            mean = flat.mean(axis=1)
            var = flat.var(axis=1)
            rm, rv = self.buffers[f"{name}.mean"], self.buffers[f"{name}.var"]
            rm *= 1 - BN_MOMENTUM
            rm += BN_MOMENTUM * mean
            rv *= 1 - BN_MOMENTUM
            rv += BN_MOMENTUM * var * (m / max(m - 1, 1))
        else:
            mean, var = self.buffers[f"{name}.mean"], self.buffers[f"{name}.var"]
        inv_std = (1.0 / np.sqrt(var + BN_EPS)).astype(self.dtype)[:, None]
        xhat = (flat - mean[:, None]) * inv_std
        y = np.maximum(xhat * gamma + beta, 0)
        if cache is not None:
            cache[name] = (xhat, inv_std, y)
        return y.reshape(x.shape)

    def _classify(self, h: np.ndarray) -> np.ndarray:
        """Shared classifier at every location: ``(C, N, H, W)`` to ``(N, H, W, classes)``."""
        c, n, hh, ww = h.shape
        out = h.reshape(c, -1).T @ self.params["fc.w"] + self.params["fc.b"]
        return out.reshape(n, hh, ww, self.num_classes)

    def forward(self, x: np.ndarray, *, taps: bool = True, cache: bool = True) -> ForwardTaps:
        """Run the network on ``x`` of shape ``(N, in_channels, H, W)``.

        With ``cache`` the activations are kept for one :meth:`backward`.
        """
        x = np.asarray(x)
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ConfigError(f"expected input (N, {self.in_channels}, H, W), got {x.shape}")
        if x.shape[2] % 4 or x.shape[3] % 4:
            raise ConfigError(f"spatial size must be divisible by 4, got {x.shape[2:]}")
        self.forward_calls += 1
        store = {} if cache else None
        h = np.ascontiguousarray(x.transpose(1, 0, 2, 3), dtype=self.dtype)
        stage2 = None
        for name, _, _, stride in self.convs:
            out, cols = _conv_forward(h, _as_2d(self.params[f"{name}.w"]), stride)
            if store is not None:
                store[f"{name}.in"] = (cols, h.shape)
            h = self._bn_relu(name, out, store)
            if name == "s2.1":
                stage2 = h
        c, n, hh, ww = h.shape
        feat = h.reshape(c, n, hh * ww).mean(axis=2).T
        result = ForwardTaps(feat @ self.params["fc.w"] + self.params["fc.b"])
        if taps:
            result.dense1 = self._classify(h)
            result.dense2 = self._classify(stage2)
        if store is not None:
            store["feat"] = feat
            store["last"] = h.shape
            store["training"] = self.training
        self._cache = store
        return result

    def backward(self, grad_logits: np.ndarray) -> dict[str, np.ndarray]:
        """Parameter gradients given ``dLoss/d pooled_logits`` of shape ``(N, C)``.

        Consumes the cache of the preceding :meth:`forward`. Dense taps get
        no gradient.
        """
        cache = self._cache
        if cache is None:
            raise RuntimeError("no forward cache: call forward(cache=True) before backward")
        if not cache["training"]:
            raise RuntimeError("backward through eval-mode BatchNorm is not supported")
        c, n, hh, ww = cache["last"]
        grad_logits = np.asarray(grad_logits, dtype=self.dtype)
        if grad_logits.shape != (n, self.num_classes):
            raise RuntimeError(f"stale cache: gradient shape {grad_logits.shape} does not match the cached batch")
        self._cache = None
        self.backward_calls += 1
        grads: dict[str, np.ndarray] = {}
        grads["fc.w"] = cache["feat"].T @ grad_logits
        grads["fc.b"] = grad_logits.sum(axis=0)
        dfeat = (grad_logits @ self.params["fc.w"].T).T / (hh * ww)
        dh = np.broadcast_to(dfeat[:, :, None], (c, n, hh * ww)).reshape(c, -1)
        for name, cin, cout, stride in reversed(self.convs):
            xhat, inv_std, y = cache[name]
            dy = np.where(y > 0, dh.reshape(y.shape), 0)
            grads[f"{name}.beta"] = dy.sum(axis=1)
            grads[f"{name}.gamma"] = (dy * xhat).sum(axis=1)
            dxhat = dy * self.params[f"{name}.gamma"][:, None]
            m = dy.shape[1]
            dout = (inv_std / m) * (
                m * dxhat - dxhat.sum(axis=1, keepdims=True) - xhat * (dxhat * xhat).sum(axis=1, keepdims=True)
            )
            cols, in_shape = cache[f"{name}.in"]
            w = self.params[f"{name}.w"]
            out_shape = (cout, in_shape[1], in_shape[2] // stride, in_shape[3] // stride)
            dw2d, dh = _conv_backward(dout.reshape(out_shape), cols, _as_2d(w), in_shape, stride, name != "stem")
            grads[f"{name}.w"] = dw2d.reshape(cout, 3, 3, cin).transpose(0, 3, 1, 2)
            if dh is not None:
                dh = dh.reshape(cin, -1)
        return {k: np.ascontiguousarray(grads[k]) for k in self.params}

    def copy(self) -> MiniNet:
        other = MiniNet.__new__(MiniNet)
        other.__dict__.update(self.__dict__)
        other.params = {k: v.copy() for k, v in self.params.items()}
        other.buffers = {k: v.copy() for k, v in self.buffers.items()}
        other._cache = None
        return other


def save_checkpoint(model: MiniNet, path, extra: dict[str, np.ndarray] | None = None) -> None:
    """Write ``model`` as a versioned little-endian float32 blob.

    Header ``<4sIIIII``: magic, version, num_classes, three stage widths.
    Then float32 arrays: parameters in declaration order, BatchNorm running
    mean/var per conv, then any ``extra`` arrays in sorted key order, each
    preceded by a uint32 length.
    """
    w1, w2, w3 = model.widths
    parts = [_HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, model.num_classes, w1, w2, w3)]
    for arr in list(model.params.values()) + list(model.buffers.values()):
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    for key in sorted(extra or {}):
        arr = np.ascontiguousarray(extra[key], dtype="<f4").ravel()
        name = key.encode()
        parts.append(struct.pack("<I", len(name)) + name + struct.pack("<I", arr.size) + arr.tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path, dtype=np.float32) -> tuple[MiniNet, dict[str, np.ndarray]]:
    """Read a checkpoint; returns the model (eval mode) and extra arrays."""
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        raise ValueError(f"{path}: truncated checkpoint header")
    magic, version, num_classes, w1, w2, w3 = _HEADER.unpack_from(blob)
    if magic != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint (magic {magic!r})")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    model = MiniNet(num_classes, (w1, w2, w3), seed=None, dtype=dtype)
    offset = _HEADER.size
    for store in (model.params, model.buffers):
        for key, arr in store.items():
            nbytes = arr.size * 4
            if offset + nbytes > len(blob):
                raise ValueError(f"{path}: truncated at {key}")
            store[key] = np.frombuffer(blob, dtype="<f4", count=arr.size, offset=offset).reshape(arr.shape).astype(dtype)
            offset += nbytes
    extra = {}
    while offset < len(blob):
        (klen,) = struct.unpack_from("<I", blob, offset)
        key = blob[offset + 4 : offset + 4 + klen].decode()
        offset += 4 + klen
        (size,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        extra[key] = np.frombuffer(blob, dtype="<f4", count=size, offset=offset).copy()
        offset += 4 * size
    return model.eval(), extra


__all__ = ["ForwardTaps", "MiniNet", "save_checkpoint", "load_checkpoint"]
