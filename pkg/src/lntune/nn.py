"""
Small numpy multilayer perceptron for the Q-network.

Dense layers with ReLU on hidden units, inverted dropout after each hidden
activation, linear output. Arrays are float64 and stored as ``(fan_in,
fan_out)`` matrices so a batch ``x @ W + b`` runs row-wise.

Model file layout (all integers little-endian)::

    4 bytes   magic  b"LNTQ"
    1 byte    format version (FORMAT_VERSION)
    4 bytes   uint32 header length H
    H bytes   UTF-8 JSON header, sorted keys: layer_sizes, dropout,
              activations, norm, actions, shapes
    ...       every array in header order (W0, b0, W1, b1, ...) as <f8, C order
    4 bytes   uint32 CRC-32 of everything before it
"""

from __future__ import annotations

import json
import os
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"LNTQ"
FORMAT_VERSION = 1


class ModelFileError(ValueError):
    pass


class NonFiniteGradientError(FloatingPointError):
    pass


@dataclass(frozen=True)
class MlpSpec:
    layer_sizes: tuple[int, ...] = (6, 256, 256, 8)
    dropout: float = 0.2

    def __post_init__(self):
        if len(self.layer_sizes) < 2 or min(self.layer_sizes) < 1:
            raise ValueError("need at least an input and an output layer")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")

    def n_params(self) -> int:
        s = self.layer_sizes
        return sum(a * b + b for a, b in zip(s[:-1], s[1:]))


@dataclass
class Weights:
    spec: MlpSpec
    W: list[np.ndarray]
    b: list[np.ndarray]

    def copy(self) -> "Weights":
        return Weights(self.spec, [w.copy() for w in self.W], [b.copy() for b in self.b])

    def arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.W, self.b):
            out += [w, b]
        return out

    def equals(self, other: "Weights") -> bool:
        return self.spec == other.spec and all(
            np.array_equal(a, b) for a, b in zip(self.arrays(), other.arrays())
        )


@dataclass
class ForwardCache:
    inputs: list[np.ndarray]      # input to each dense layer
    pre: list[np.ndarray]         # hidden pre-activations
    masks: list[np.ndarray | None]
    q: np.ndarray


def init_weights(spec: MlpSpec, seed) -> Weights:
    """He-uniform weights (variance 2/fan_in), zero biases."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    W, b = [], []
    for fan_in, fan_out in zip(spec.layer_sizes[:-1], spec.layer_sizes[1:]):
        limit = np.sqrt(6.0 / fan_in)
        W.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        b.append(np.zeros(fan_out))
    return Weights(spec, W, b)


def predict(w: Weights, x: np.ndarray) -> np.ndarray:
    """Eval-mode forward pass (no dropout)."""
    h = x
    last = len(w.W) - 1
    for i, (W, b) in enumerate(zip(w.W, w.b)):
        h = h @ W + b
        if i < last:
            h = np.maximum(h, 0.0)
    return h


def forward(w: Weights, x: np.ndarray, rng: np.random.Generator | None = None) -> ForwardCache:
    """Forward pass keeping what :func:`backward` needs.

    With ``rng`` the pass is in training mode: each hidden activation is
    multiplied by an inverted-dropout mask drawn from ``rng``. Without it the
    pass is deterministic eval mode.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != w.spec.layer_sizes[0]:
        raise ValueError(f"expected input width {w.spec.layer_sizes[0]}, got {x.shape[1]}")
    p = w.spec.dropout
    inputs, pre, masks = [], [], []
    h = x
    last = len(w.W) - 1
    for i, (W, b) in enumerate(zip(w.W, w.b)):
        inputs.append(h)
        h = h @ W + b
        if i < last:
            pre.append(h)
            h = np.maximum(h, 0.0)
            mask = None
            if rng is not None and p > 0:
                mask = (rng.random(h.shape) >= p) / (1.0 - p)
                h = h * mask
            masks.append(mask)
    return ForwardCache(inputs, pre, masks, h)


def backward(w: Weights, cache: ForwardCache, actions, targets) -> tuple[float, Weights]:
    """Mean squared error on the taken action's Q-value and its gradients.

    ``loss = mean_i (q[i, a_i] - y_i)^2``; outputs of actions not taken get
    zero gradient. Gradients are returned as a :class:`Weights` for symmetry
    with the parameters.
    """
    q = cache.q
    actions = np.atleast_1d(np.asarray(actions, dtype=np.intp))
    targets = np.atleast_1d(np.asarray(targets, dtype=float))
    n = q.shape[0]
    if actions.shape != (n,) or targets.shape != (n,):
        raise ValueError("actions and targets must have one entry per batch row")
    rows = np.arange(n)
    err = q[rows, actions] - targets
    loss = float(np.mean(err * err))
    d = np.zeros_like(q)
    d[rows, actions] = 2.0 * err / n

    gW = [None] * len(w.W)
    gb = [None] * len(w.b)
    for i in range(len(w.W) - 1, -1, -1):
        gW[i] = cache.inputs[i].T @ d
        gb[i] = d.sum(axis=0)
        if i == 0:
            break
        d = d @ w.W[i].T
        if cache.masks[i - 1] is not None:
            d = d * cache.masks[i - 1]
        d = d * (cache.pre[i - 1] > 0)
    return loss, Weights(w.spec, gW, gb)


@dataclass
class AdamState:
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def adam_step(params, grads, state: AdamState) -> None:
    """Bias-corrected Adam update applied to ``params`` in place.

    ``params`` and ``grads`` are :class:`Weights` or matching lists of arrays.
    """
    if isinstance(params, Weights):
        params = params.arrays()
    if isinstance(grads, Weights):
        grads = grads.arrays()
    if len(params) != len(grads):
        raise ValueError("params and grads differ in length")
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError("non-finite gradient")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    step = state.lr / c1
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError(f"shape mismatch {p.shape} vs {g.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * np.square(g)
        # lr * m_hat / (sqrt(v_hat) + eps)
        denom = np.sqrt(v)
        denom *= 1.0 / np.sqrt(c2)
        denom += state.eps
        np.divide(m, denom, out=denom)
        denom *= step
        p -= denom


def save_weights(w: Weights, norm: dict, path, actions=None) -> None:
    """Write the model file atomically (temp file then rename)."""
    arrays = w.arrays()
    header = {
        "layer_sizes": list(w.spec.layer_sizes),
        "dropout": w.spec.dropout,
        "activations": ["relu"] * (len(w.W) - 1) + ["linear"],
        "norm": {k: float(v) for k, v in sorted(norm.items())},
        "actions": [list(a) for a in actions] if actions is not None else [],
        "shapes": [list(a.shape) for a in arrays],
    }
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    body = MAGIC + struct.pack("<BI", FORMAT_VERSION, len(hbytes)) + hbytes
    body += b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays)
    body += struct.pack("<I", zlib.crc32(body))
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(body)
    os.replace(tmp, path)


def load_weights(path, expect_layers: int | None = None) -> tuple[Weights, dict, list]:
    """Read a model file; returns ``(weights, norm, actions)``."""
    data = Path(path).read_bytes()
    if len(data) < 13 or data[:4] != MAGIC:
        raise ModelFileError(f"{path}: not a model file (bad magic)")
    version, hlen = struct.unpack_from("<BI", data, 4)
    if version != FORMAT_VERSION:
        raise ModelFileError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    (crc,) = struct.unpack_from("<I", data, len(data) - 4)
    if zlib.crc32(data[:-4]) != crc:
        raise ModelFileError(f"{path}: checksum mismatch, file is corrupted")
    try:
        header = json.loads(data[9:9 + hlen])
    except ValueError as exc:
        raise ModelFileError(f"{path}: unreadable header ({exc})") from None
    sizes = tuple(header["layer_sizes"])
    n_dense = len(sizes) - 1
    if expect_layers is not None and n_dense != expect_layers:
        raise ModelFileError(f"{path}: has {n_dense} dense layers, expected {expect_layers}")
    spec = MlpSpec(sizes, header["dropout"])
    expected = []
    for a, b in zip(sizes[:-1], sizes[1:]):
        expected += [[a, b], [b]]
    if header["shapes"] != expected:
        raise ModelFileError(f"{path}: array shapes {header['shapes']} do not match layers {list(sizes)}")
    offset = 9 + hlen
    arrays = []
    for shape in expected:
        count = int(np.prod(shape))
        end = offset + 8 * count
        if end > len(data) - 4:
            raise ModelFileError(f"{path}: payload shorter than declared shapes")
        arrays.append(np.frombuffer(data[offset:end], dtype="<f8").reshape(shape).astype(float))
        offset = end
    if offset != len(data) - 4:
        raise ModelFileError(f"{path}: trailing bytes after arrays")
    w = Weights(spec, arrays[0::2], arrays[1::2])
    actions = [tuple(a) for a in header["actions"]]
    return w, header["norm"], actions
