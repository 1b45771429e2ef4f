"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

Just enough machinery for the encoder/classifier stack: each operation
computes its forward result eagerly and registers a closure that pushes the
upstream gradient to its parents.  ``Tensor.backward()`` walks the graph in
reverse topological order.  Every op's analytic gradient is validated
against central finite differences in the test suite.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import erf


class ConfigurationError(ValueError):
    """The inputs cannot form a valid training batch (e.g. a class singleton)."""


class Tensor:
    """Dtype-preserving: float32 graphs train fast, float64 graphs back the
    finite-difference gradient checks."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, parents=(), backward=None):
        data = np.asarray(data)
        if not np.issubdtype(data.dtype, np.floating):
            data = data.astype(np.float64)
        self.data = data
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = parents if self.requires_grad else ()
        self._backward = backward if self.requires_grad else None

    @property
    def shape(self):
        return self.data.shape

    def backward(self) -> None:
        if self.data.size != 1:
            raise ValueError("backward() expects a scalar loss")
        order: list[Tensor] = []
        seen: set[int] = set()

        def visit(t: Tensor):
            if id(t) in seen or not t.requires_grad:
                return
            seen.add(id(t))
            for p in t._parents:
                visit(p)
            order.append(t)

        visit(self)
        for t in order:
            t.grad = np.zeros_like(t.data)
        self.grad = np.ones_like(self.data)
        for t in reversed(order):
            if t._backward is not None:
                t._backward(t.grad)


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if t.requires_grad:
        t.grad += g


# ---------------------------------------------------------------------------
# Dense / shape ops
# ---------------------------------------------------------------------------

def dense(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """y = x @ w + b with x (B, F), w (F, O), b (O,)."""
    out_data = x.data @ w.data + b.data

    def backward(g):
        _accumulate(x, g @ w.data.T)
        _accumulate(w, x.data.T @ g)
        _accumulate(b, g.sum(axis=0))

    return Tensor(out_data, parents=(x, w, b), backward=backward)


def reshape(x: Tensor, shape) -> Tensor:
    out_data = x.data.reshape(shape)

    def backward(g):
        _accumulate(x, g.reshape(x.data.shape))

    return Tensor(out_data, parents=(x,), backward=backward)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    out_data = x.data * mask

    def backward(g):
        _accumulate(x, g * mask)

    return Tensor(out_data, parents=(x,), backward=backward)


def gelu(x: Tensor) -> Tensor:
    """Exact (erf-based) Gaussian error linear unit."""
    cdf = 0.5 * (1.0 + erf(x.data / math.sqrt(2.0)))
    out_data = x.data * cdf

    def backward(g):
        pdf = np.exp(-0.5 * x.data**2) / math.sqrt(2.0 * math.pi)
        _accumulate(x, g * (cdf + x.data * pdf))

    return Tensor(out_data, parents=(x,), backward=backward)


# ---------------------------------------------------------------------------
# Convolution / pooling (NCHW, valid padding, unit stride)
# ---------------------------------------------------------------------------

def _windows(arr: np.ndarray, kh: int, kw: int) -> np.ndarray:
    """Sliding (kh, kw) windows: (B, C, H, W) -> (B, C, OH, OW, kh, kw) view."""
    b, c, h, w = arr.shape
    sb, sc, sh, sw = arr.strides
    oh, ow = h - kh + 1, w - kw + 1
    return np.lib.stride_tricks.as_strided(
        arr, (b, c, oh, ow, kh, kw), (sb, sc, sh, sw, sh, sw), writeable=False)


def _im2col(arr: np.ndarray, kh: int, kw: int) -> np.ndarray:
    """(B, C, H, W) -> contiguous (B*OH*OW, C*kh*kw) patch matrix."""
    win = _windows(arr, kh, kw)
    b, c, oh, ow = win.shape[:4]
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(b * oh * ow, c * kh * kw)


def conv2d(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Valid 2-D convolution: x (B,C,H,W), w (O,C,kh,kw), b (O,).

    im2col + GEMM; the patch matrix is cached for the kernel gradient and
    the input gradient is the full correlation with the rotated kernel.
    """
    o, c, kh, kw = w.data.shape
    bsz, _, h, wd = x.data.shape
    if h < kh or wd < kw:
        raise ValueError(f"input {x.data.shape} too small for kernel {w.data.shape}")
    oh, ow = h - kh + 1, wd - kw + 1
    cols = _im2col(x.data, kh, kw)
    wmat = w.data.reshape(o, c * kh * kw)
    out2d = cols @ wmat.T
    out_data = out2d.reshape(bsz, oh, ow, o).transpose(0, 3, 1, 2) + b.data[None, :, None, None]

    def backward(g):
        _accumulate(b, g.sum(axis=(0, 2, 3)))
        g2d = g.transpose(0, 2, 3, 1).reshape(bsz * oh * ow, o)
        if w.requires_grad:
            _accumulate(w, (g2d.T @ cols).reshape(o, c, kh, kw))
        if x.requires_grad:
            pad = np.pad(g, ((0, 0), (0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1)))
            gcols = _im2col(pad, kh, kw)
            wrot = w.data[:, :, ::-1, ::-1].transpose(1, 0, 2, 3).reshape(c, o * kh * kw)
            dx2d = gcols @ wrot.T
            _accumulate(x, dx2d.reshape(bsz, h, wd, c).transpose(0, 3, 1, 2))

    return Tensor(out_data, parents=(x, w, b), backward=backward)


def maxpool2(x: Tensor) -> Tensor:
    """2x2 max pooling, stride 2; trailing odd rows/columns are dropped."""
    bsz, c, h, w = x.data.shape
    oh, ow = h // 2, w // 2
    if oh == 0 or ow == 0:
        raise ValueError(f"input {x.data.shape} too small for 2x2 pooling")
    crop = x.data[:, :, : 2 * oh, : 2 * ow]
    tiles = crop.reshape(bsz, c, oh, 2, ow, 2).transpose(0, 1, 2, 4, 3, 5)
    flat = tiles.reshape(bsz, c, oh, ow, 4)
    arg = flat.argmax(axis=-1)
    out_data = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]

    def backward(g):
        dflat = np.zeros_like(flat)
        np.put_along_axis(dflat, arg[..., None], g[..., None], axis=-1)
        dcrop = dflat.reshape(bsz, c, oh, ow, 2, 2).transpose(0, 1, 2, 4, 3, 5)
        dx = np.zeros_like(x.data)
        dx[:, :, : 2 * oh, : 2 * ow] = dcrop.reshape(bsz, c, 2 * oh, 2 * ow)
        _accumulate(x, dx)

    return Tensor(out_data, parents=(x,), backward=backward)


# ---------------------------------------------------------------------------
# Normalization and losses
# ---------------------------------------------------------------------------

def l2_normalize_rows(x: Tensor) -> Tensor:
    norms = np.sqrt(np.sum(x.data**2, axis=1, keepdims=True) + 1e-24)
    out_data = x.data / norms

    def backward(g):
        dot = np.sum(g * out_data, axis=1, keepdims=True)
        _accumulate(x, (g - out_data * dot) / norms)

    return Tensor(out_data, parents=(x,), backward=backward)


def supcon_loss(z: Tensor, labels, pairing=None, tau: float = 0.07) -> Tensor:
    """Supervised contrastive loss over a batch of embeddings.

    For each anchor i the positives are every other sample with the same
    label; the denominator runs over everything except i.  ``pairing`` is an
    optional view map j(i) used only for validation (j(j(i)) = i and labels
    must match); the loss itself depends on labels alone.
    """
    labels = np.asarray(labels)
    n = z.data.shape[0]
    if labels.shape != (n,):
        raise ConfigurationError("labels must match the batch size")
    if pairing is not None:
        pairing = np.asarray(pairing)
        if not np.array_equal(pairing[pairing], np.arange(n)):
            raise ConfigurationError("view pairing must be an involution")
        if not np.array_equal(labels[pairing], labels):
            raise ConfigurationError("paired views must share labels")
    if tau <= 0:
        raise ConfigurationError("temperature must be positive")

    pos = (labels[:, None] == labels[None, :]) & ~np.eye(n, dtype=bool)
    pos_counts = pos.sum(axis=1)
    if np.any(pos_counts == 0):
        raise ConfigurationError(
            "every sample needs at least one positive (>= 2 per class in the batch)")

    s = z.data @ z.data.T / tau
    off = ~np.eye(n, dtype=bool)
    s_off = np.where(off, s, -np.inf)
    smax = s_off.max(axis=1, keepdims=True)
    expo = np.exp(s_off - smax)
    denom = expo.sum(axis=1, keepdims=True)
    lse = (smax + np.log(denom)).ravel()
    mean_pos = np.sum(np.where(pos, s, 0.0), axis=1) / pos_counts
    loss = float(np.sum(lse - mean_pos))

    def backward(g):
        p = expo / denom                       # softmax over R(i), zero diagonal
        gmat = p - pos / pos_counts[:, None]
        _accumulate(z, float(g) * (gmat + gmat.T) @ z.data / tau)

    return Tensor(loss, parents=(z,), backward=backward)


def cross_entropy(logits: Tensor | np.ndarray, labels) -> Tensor:
    """Softmax cross-entropy, log-sum-exp stabilized.

    Accepts a single logit vector with an integer label, or a (B, K) batch
    with B labels (the batch loss is the mean).
    """
    t = logits if isinstance(logits, Tensor) else Tensor(logits)
    squeeze = t.data.ndim == 1
    data = t.data[None, :] if squeeze else t.data
    y = np.atleast_1d(np.asarray(labels, dtype=int))
    bsz = data.shape[0]
    if y.shape != (bsz,):
        raise ConfigurationError("labels must match the batch size")

    smax = data.max(axis=1, keepdims=True)
    expo = np.exp(data - smax)
    lse = (smax + np.log(expo.sum(axis=1, keepdims=True))).ravel()
    loss = float(np.mean(lse - data[np.arange(bsz), y]))

    def backward(g):
        soft = expo / expo.sum(axis=1, keepdims=True)
        soft[np.arange(bsz), y] -= 1.0
        grad = float(g) * soft / bsz
        _accumulate(t, grad[0] if squeeze else grad)

    return Tensor(loss, parents=(t,), backward=backward)


def softmax_probs(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax (plain ndarray helper for evaluation)."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


# ---------------------------------------------------------------------------
# Finite-difference checking
# ---------------------------------------------------------------------------

def numeric_gradient(f, x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central finite-difference gradient of scalar f at x."""
    g = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = f(x)
        flat[i] = orig - eps
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * eps)
    return g


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)
