"""1-D convolutional network over raw payload bytes, forward and backward in numpy.

Topology, with valid stride-1 convolutions and non-overlapping pooling::

    (N, 512) -> conv 16x25 -> 488 -> relu -> maxpool 3 -> 162
             -> conv 32x25 -> 138 -> relu -> maxpool 3 -> 46
             -> flatten 32*46 = 1472 -> dense 256 -> relu -> dropout
             -> dense C -> softmax
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

PARAM_NAMES = ("conv1_W", "conv1_b", "conv2_W", "conv2_b", "fc_W", "fc_b", "out_W", "out_b")


@dataclass(frozen=True)
class Architecture:
    input_length: int = 512
    filters: tuple[int, int] = (16, 32)
    kernel_size: int = 25
    pool_size: int = 3
    dense_units: int = 256
    n_classes: int = 3

    def shape_chain(self) -> list[int]:
        """Sequence lengths after conv1, pool1, conv2, pool2, then flatten/dense/output widths."""
        l1 = self.input_length - self.kernel_size + 1
        p1 = l1 // self.pool_size
        l2 = p1 - self.kernel_size + 1
        p2 = l2 // self.pool_size
        if l1 < 1 or p1 < 1 or l2 < 1 or p2 < 1:
            raise ValueError("input too short for the convolution/pooling stack")
        return [self.input_length, l1, p1, l2, p2, p2 * self.filters[1], self.dense_units, self.n_classes]

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        f1, f2 = self.filters
        k = self.kernel_size
        flat = self.shape_chain()[5]
        return {
            "conv1_W": (f1, 1, k), "conv1_b": (f1,),
            "conv2_W": (f2, f1, k), "conv2_b": (f2,),
            "fc_W": (flat, self.dense_units), "fc_b": (self.dense_units,),
            "out_W": (self.dense_units, self.n_classes), "out_b": (self.n_classes,),
        }


def glorot_init(arch: Architecture, rng: np.random.Generator, dtype=np.float32) -> dict[str, np.ndarray]:
    params = {}
    for name, shape in arch.param_shapes().items():
        if name.endswith("_b"):
            params[name] = np.zeros(shape, dtype=dtype)
            continue
        if len(shape) == 3:
            fan_in, fan_out = shape[1] * shape[2], shape[0] * shape[2]
        else:
            fan_in, fan_out = shape
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        params[name] = rng.uniform(-limit, limit, size=shape).astype(dtype)
    return params


# ---------------------------------------------------------------- layers


def conv1d_forward(x, W, b):
    n, cin, length = x.shape
    cout, _, k = W.shape
    lout = length - k + 1
    cols = sliding_window_view(x, k, axis=2).transpose(0, 2, 1, 3).reshape(n * lout, cin * k)
    out = cols @ W.reshape(cout, cin * k).T + b
    return out.reshape(n, lout, cout).transpose(0, 2, 1), cols


def conv1d_backward(dout, cols, W, input_shape, need_dx=True):
    n, cin, length = input_shape
    cout, _, k = W.shape
    lout = dout.shape[2]
    d2 = dout.transpose(0, 2, 1).reshape(n * lout, cout)
    dW = (d2.T @ cols).reshape(W.shape)
    db = d2.sum(axis=0)
    if not need_dx:
        return None, dW, db
    # input gradient = full convolution of dout with the flipped kernel
    padded = np.zeros((n, lout + 2 * (k - 1), cout), dtype=dout.dtype)
    padded[:, k - 1:k - 1 + lout, :] = dout.transpose(0, 2, 1)
    dcols = sliding_window_view(padded, k, axis=1).reshape(n * length, cout * k)
    w_flip = W[:, :, ::-1].transpose(0, 2, 1).reshape(cout * k, cin)
    dx = (dcols @ w_flip).reshape(n, length, cin).transpose(0, 2, 1)
    return dx, dW, db


def maxpool_forward(x, size):
    n, c, length = x.shape
    lp = length // size
    xr = x[:, :, :lp * size].reshape(n, c, lp, size)
    idx = xr.argmax(axis=3)
    out = np.take_along_axis(xr, idx[..., None], axis=3)[..., 0]
    return out, idx


def maxpool_backward(dout, idx, input_shape, size):
    n, c, length = input_shape
    lp = dout.shape[2]
    dxr = np.zeros((n, c, lp, size), dtype=dout.dtype)
    np.put_along_axis(dxr, idx[..., None], dout[..., None], axis=3)
    dx = np.zeros(input_shape, dtype=dout.dtype)
    dx[:, :, :lp * size] = dxr.reshape(n, c, lp * size)
    return dx


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


# ---------------------------------------------------------------- network


@dataclass
class ForwardCache:
    shapes: dict = field(default_factory=dict)
    tensors: dict = field(default_factory=dict)


class CnnNetwork:
    """Parameters plus forward/backward passes; training lives in the estimator."""

    def __init__(self, arch: Architecture, params: dict[str, np.ndarray], dropout: float = 0.2):
        self.arch = arch
        self.params = params
        self.dropout = dropout
        expected = arch.param_shapes()
        for name in PARAM_NAMES:
            if params[name].shape != expected[name]:
                raise ValueError(f"{name}: shape {params[name].shape} != {expected[name]}")

    @classmethod
    def initialize(cls, arch: Architecture, seed: int, dropout: float = 0.2, dtype=np.float32) -> "CnnNetwork":
        return cls(arch, glorot_init(arch, np.random.default_rng(seed), dtype), dropout)

    @property
    def dtype(self):
        return self.params["conv1_W"].dtype

    def astype(self, dtype) -> "CnnNetwork":
        return CnnNetwork(self.arch, {k: v.astype(dtype) for k, v in self.params.items()}, self.dropout)

    def dropout_mask(self, n: int, rng: np.random.Generator) -> np.ndarray:
        keep = 1.0 - self.dropout
        mask = (rng.random((n, self.arch.dense_units)) < keep).astype(self.dtype)
        return mask / self.dtype.type(keep)

    def forward(self, X, dropout_mask: Optional[np.ndarray] = None, keep: bool = False):
        """Return logits; with ``keep`` also the cache used by :meth:`loss_and_grads`.

        A ``dropout_mask`` (already scaled) switches dropout on; inference
        passes none.
        """
        p = self.params
        ps = self.arch.pool_size
        x0 = np.asarray(X, dtype=self.dtype)[:, None, :]
        z1, cols1 = conv1d_forward(x0, p["conv1_W"], p["conv1_b"])
        a1 = np.maximum(z1, 0)
        h1, idx1 = maxpool_forward(a1, ps)
        z2, cols2 = conv1d_forward(h1, p["conv2_W"], p["conv2_b"])
        a2 = np.maximum(z2, 0)
        h2, idx2 = maxpool_forward(a2, ps)
        flat = h2.reshape(h2.shape[0], -1)
        z3 = flat @ p["fc_W"] + p["fc_b"]
        a3 = np.maximum(z3, 0)
        d3 = a3 * dropout_mask if dropout_mask is not None else a3
        logits = d3 @ p["out_W"] + p["out_b"]
        if not keep:
            return logits
        cache = ForwardCache(
            shapes={"x0": x0.shape, "a1": a1.shape, "h1": h1.shape, "a2": a2.shape, "h2": h2.shape},
            tensors={"cols1": cols1, "z1": z1, "idx1": idx1, "cols2": cols2, "z2": z2,
                     "idx2": idx2, "flat": flat, "z3": z3, "d3": d3, "mask": dropout_mask},
        )
        return logits, cache

    def loss_and_grads(self, X, y, dropout_mask=None):
        """Mean cross-entropy over the batch and its gradient for every parameter."""
        logits, c = self.forward(X, dropout_mask, keep=True)
        t = c.tensors
        p = self.params
        n = logits.shape[0]
        probs = softmax(logits)
        y = np.asarray(y)
        loss = -np.log(np.maximum(probs[np.arange(n), y], np.finfo(probs.dtype).tiny)).mean()

        g = {}
        dlogits = probs
        dlogits[np.arange(n), y] -= 1
        dlogits /= n
        g["out_W"] = t["d3"].T @ dlogits
        g["out_b"] = dlogits.sum(axis=0)
        dd3 = dlogits @ p["out_W"].T
        da3 = dd3 * t["mask"] if t["mask"] is not None else dd3
        dz3 = da3 * (t["z3"] > 0)
        g["fc_W"] = t["flat"].T @ dz3
        g["fc_b"] = dz3.sum(axis=0)
        dh2 = (dz3 @ p["fc_W"].T).reshape(c.shapes["h2"])
        da2 = maxpool_backward(dh2, t["idx2"], c.shapes["a2"], self.arch.pool_size)
        dz2 = da2 * (t["z2"] > 0)
        dh1, g["conv2_W"], g["conv2_b"] = conv1d_backward(dz2, t["cols2"], p["conv2_W"], c.shapes["h1"])
        da1 = maxpool_backward(dh1, t["idx1"], c.shapes["a1"], self.arch.pool_size)
        dz1 = da1 * (t["z1"] > 0)
        _, g["conv1_W"], g["conv1_b"] = conv1d_backward(dz1, t["cols1"], p["conv1_W"], c.shapes["x0"], need_dx=False)
        return float(loss), g

    def loss(self, X, y, dropout_mask=None) -> float:
        probs = softmax(self.forward(X, dropout_mask))
        y = np.asarray(y)
        return float(-np.log(np.maximum(probs[np.arange(len(y)), y], np.finfo(probs.dtype).tiny)).mean())

    def predict_proba(self, X, batch_size: int = 256) -> np.ndarray:
        X = np.asarray(X)
        out = [softmax(self.forward(X[i:i + batch_size])) for i in range(0, len(X), batch_size)]
        return np.concatenate(out) if out else np.zeros((0, self.arch.n_classes), dtype=self.dtype)

    def intermediate_shapes(self, X) -> list[tuple[int, ...]]:
        """Activation shapes along the chain, for auditing the dimension arithmetic."""
        logits, c = self.forward(X, keep=True)
        t = c.tensors
        return [c.shapes["x0"], t["z1"].shape, c.shapes["h1"], t["z2"].shape, c.shapes["h2"],
                t["flat"].shape, t["z3"].shape, logits.shape]


class Adam:
    def __init__(self, params: dict[str, np.ndarray], lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-7):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        lr_t = self.lr * np.sqrt(1 - b2 ** self.t) / (1 - b1 ** self.t)
        for k, g in grads.items():
            m, v = self.m[k], self.v[k]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * (g * g)
            params[k] -= (lr_t * m / (np.sqrt(v) + self.eps)).astype(params[k].dtype)
