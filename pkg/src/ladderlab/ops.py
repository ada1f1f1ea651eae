"""Primitive differentiable operations.

Each op validates shapes, computes its float32 forward value, checks the
result for non-finite values (NaN propagation is an error here, never
silent), and registers a backward closure on the active tape when gradients
are required. Broadcasting is deliberately limited to bias-add; everything
else wants explicit ``reshape``.

``forward_op`` exposes the same primitives behind a string dispatcher.
"""

import numpy as np

from . import kernels
from .errors import DimensionError, NumericError
from .tensor import Tensor, active_tape

__all__ = [
    "matmul", "conv2d", "conv1d_same", "conv_transpose2d", "add", "sub",
    "mul", "scale", "relu", "tanh", "sigmoid", "softmax", "log", "sumall",
    "reshape", "maxpool2d", "mse", "cross_entropy_logits", "hinge",
    "l1", "l2", "forward_op", "OP_KINDS",
]


def _out(op_name, data, inputs, backward_fn):
    if not np.isfinite(data).all():
        raise NumericError(f"{op_name}: non-finite output")
    t = Tensor(data)
    t.requires_grad = any(i.requires_grad for i in inputs)
    tape = active_tape()
    if tape is not None and t.requires_grad:
        tape.record(t, inputs, backward_fn)
    return t


def _pair(kind, a, b):
    if not isinstance(a, Tensor) or not isinstance(b, Tensor):
        raise DimensionError(f"{kind}: expected Tensor operands")
    return a, b


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _pair("matmul", a, b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: {a.shape} x {b.shape}")

    def bwd(g):
        return [g @ b.data.T, a.data.T @ g]

    return _out("matmul", a.data @ b.data, [a, b], bwd)


def _stride_pad(stride, padding):
    sh, sw = (stride, stride) if isinstance(stride, int) else stride
    ph, pw = (padding, padding) if isinstance(padding, int) else padding
    return sh, sw, ph, pw


def conv2d(x: Tensor, w: Tensor, stride=1, padding=0) -> Tensor:
    sh, sw, ph, pw = _stride_pad(stride, padding)
    if x.data.ndim != 4 or w.data.ndim != 4 or x.shape[1] != w.shape[1]:
        raise DimensionError(f"conv2d: x {x.shape}, w {w.shape}")
    if x.shape[2] + 2 * ph < w.shape[2] or x.shape[3] + 2 * pw < w.shape[3]:
        raise DimensionError(f"conv2d: kernel {w.shape} larger than padded input {x.shape}")
    H, W = x.shape[2], x.shape[3]
    kh, kw = w.shape[2], w.shape[3]

    def bwd(g):
        return [
            kernels.conv2d_dx(g, w.data, sh, sw, ph, pw, H, W),
            kernels.conv2d_dw(g, x.data, sh, sw, ph, pw, kh, kw),
        ]

    return _out("conv2d", kernels.conv2d_fwd(x.data, w.data, sh, sw, ph, pw), [x, w], bwd)


def conv_transpose2d(z: Tensor, w: Tensor, stride=1, padding=0) -> Tensor:
    """Transposed convolution; weights are [in_channels, out_channels, kh, kw]."""
    sh, sw, ph, pw = _stride_pad(stride, padding)
    if z.data.ndim != 4 or w.data.ndim != 4 or z.shape[1] != w.shape[0]:
        raise DimensionError(f"conv_transpose2d: z {z.shape}, w {w.shape}")
    kh, kw = w.shape[2], w.shape[3]
    Hout = (z.shape[2] - 1) * sh + kh - 2 * ph
    Wout = (z.shape[3] - 1) * sw + kw - 2 * pw
    if Hout <= 0 or Wout <= 0:
        raise DimensionError(f"conv_transpose2d: empty output for z {z.shape}")

    def bwd(g):
        return [
            kernels.conv2d_fwd(g, w.data, sh, sw, ph, pw),
            kernels.conv2d_dw(z.data, g, sh, sw, ph, pw, kh, kw),
        ]

    return _out(
        "conv_transpose2d",
        kernels.conv2d_dx(z.data, w.data, sh, sw, ph, pw, Hout, Wout),
        [z, w],
        bwd,
    )


def conv1d_same(x: Tensor, k: Tensor) -> Tensor:
    """Single-channel 1-D convolution, zero-padded to preserve length.

    x is (N, F), k an odd-length kernel vector; composed from conv2d so the
    backward comes for free.
    """
    if x.data.ndim != 2 or k.data.ndim != 1 or k.shape[0] % 2 != 1:
        raise DimensionError(f"conv1d_same: x {x.shape}, k {k.shape}")
    n, f = x.shape
    ksz = k.shape[0]
    x4 = reshape(x, (n, 1, 1, f))
    k4 = reshape(k, (1, 1, 1, ksz))
    y = conv2d(x4, k4, stride=1, padding=(0, ksz // 2))
    return reshape(y, (n, f))


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise add; rank-1 b is treated as a bias over the channel axis."""
    a, b = _pair("add", a, b)
    if a.shape == b.shape:
        def bwd(g):
            return [g, g]
        return _out("add", a.data + b.data, [a, b], bwd)
    if b.data.ndim == 1 and a.data.ndim == 2 and b.shape[0] == a.shape[1]:
        def bwd(g):
            return [g, g.sum(axis=0)]
        return _out("add", a.data + b.data[None, :], [a, b], bwd)
    if b.data.ndim == 1 and a.data.ndim == 4 and b.shape[0] == a.shape[1]:
        def bwd(g):
            return [g, g.sum(axis=(0, 2, 3))]
        return _out("add", a.data + b.data[None, :, None, None], [a, b], bwd)
    raise DimensionError(f"add: {a.shape} + {b.shape}")


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _pair("mul", a, b)
    if a.shape != b.shape:
        raise DimensionError(f"mul: {a.shape} * {b.shape}")

    def bwd(g):
        return [g * b.data, g * a.data]

    return _out("mul", a.data * b.data, [a, b], bwd)


def scale(x: Tensor, c: float) -> Tensor:
    c = float(c)

    def bwd(g):
        return [g * np.float32(c)]

    return _out("scale", x.data * np.float32(c), [x], bwd)


def sub(a: Tensor, b: Tensor) -> Tensor:
    return add(a, scale(b, -1.0))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0

    def bwd(g):
        return [g * mask]

    return _out("relu", np.maximum(x.data, 0), [x], bwd)


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)

    def bwd(g):
        return [g * (1.0 - y * y)]

    return _out("tanh", y, [x], bwd)


def sigmoid(x: Tensor) -> Tensor:
    # Branch on sign so neither exp() can overflow.
    pos = x.data >= 0
    y = np.empty_like(x.data)
    y[pos] = 1.0 / (1.0 + np.exp(-x.data[pos]))
    e = np.exp(x.data[~pos])
    y[~pos] = e / (1.0 + e)

    def bwd(g):
        return [g * y * (1.0 - y)]

    return _out("sigmoid", y, [x], bwd)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = (e / e.sum(axis=axis, keepdims=True)).astype(np.float32)

    def bwd(g):
        inner = (g * y).sum(axis=axis, keepdims=True)
        return [(g - inner) * y]

    return _out("softmax", y, [x], bwd)


def log(x: Tensor) -> Tensor:
    with np.errstate(divide="ignore", invalid="ignore"):
        y = np.log(x.data)

    def bwd(g):
        return [g / x.data]

    return _out("log", y, [x], bwd)


def sumall(x: Tensor) -> Tensor:
    def bwd(g):
        return [np.full_like(x.data, g.reshape(-1)[0])]

    return _out("sum", x.data.sum(dtype=np.float32).reshape(()), [x], bwd)


def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape)) != x.size:
        raise DimensionError(f"reshape: {x.shape} -> {shape}")
    old = x.data.shape

    def bwd(g):
        return [g.reshape(old)]

    return _out("reshape", x.data.reshape(shape), [x], bwd)


def maxpool2d(x: Tensor, k: int) -> Tensor:
    if x.data.ndim != 4 or x.shape[2] % k or x.shape[3] % k:
        raise DimensionError(f"maxpool2d: {x.shape} with window {k}")
    H, W = x.shape[2], x.shape[3]
    y, idx = kernels.maxpool_fwd(x.data, k)

    def bwd(g):
        return [kernels.maxpool_bwd(g, idx, k, H, W)]

    return _out("max-pool", y, [x], bwd)


def mse(pred: Tensor, target: Tensor) -> Tensor:
    pred, target = _pair("mean-squared-error", pred, target)
    if pred.shape != target.shape:
        raise DimensionError(f"mse: {pred.shape} vs {target.shape}")
    diff = pred.data - target.data
    n = diff.size

    def bwd(g):
        d = (np.float32(2.0 / n) * diff) * g.reshape(-1)[0]
        return [d, -d]

    return _out("mean-squared-error", np.mean(diff * diff, dtype=np.float32).reshape(()), [pred, target], bwd)


def cross_entropy_logits(logits: Tensor, labels) -> Tensor:
    """Mean cross-entropy from raw logits (N, C) and integer labels (N,)."""
    labels = np.asarray(labels)
    if logits.data.ndim != 2 or labels.shape != (logits.shape[0],):
        raise DimensionError(f"cross-entropy: logits {logits.shape}, labels {labels.shape}")
    n, c = logits.shape
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    picked = z[np.arange(n), labels]
    loss = np.mean(lse - picked, dtype=np.float32).reshape(())
    probs = np.exp(z - lse[:, None])

    def bwd(g):
        d = probs.copy()
        d[np.arange(n), labels] -= 1.0
        return [d * (g.reshape(-1)[0] / np.float32(n))]

    return _out("cross-entropy-with-logits", loss, [logits], bwd)


def hinge(margins: Tensor, labels) -> Tensor:
    """Mean hinge loss max(0, 1 - y*g) for labels in {-1, +1}."""
    y = np.asarray(labels, dtype=np.float32)
    if margins.data.ndim != 1 or y.shape != margins.shape:
        raise DimensionError(f"hinge: margins {margins.shape}, labels {y.shape}")
    viol = 1.0 - y * margins.data
    active = viol > 0
    n = margins.shape[0]

    def bwd(g):
        return [(-y * active) * (g.reshape(-1)[0] / np.float32(n))]

    return _out("hinge", np.mean(np.maximum(viol, 0), dtype=np.float32).reshape(()), [margins], bwd)


def l1(x: Tensor) -> Tensor:
    def bwd(g):
        return [np.sign(x.data) * g.reshape(-1)[0]]

    return _out("l1", np.abs(x.data).sum(dtype=np.float32).reshape(()), [x], bwd)


def l2(x: Tensor) -> Tensor:
    """Sum of squares (the usual weight-penalty kernel)."""

    def bwd(g):
        return [2.0 * x.data * g.reshape(-1)[0]]

    return _out("l2", (x.data * x.data).sum(dtype=np.float32).reshape(()), [x], bwd)


_DISPATCH = {
    "matmul": lambda ins, p: matmul(*ins),
    "conv2d": lambda ins, p: conv2d(*ins, stride=p.get("stride", 1), padding=p.get("padding", 0)),
    "conv1d": lambda ins, p: conv1d_same(*ins),
    "transpose-conv2d": lambda ins, p: conv_transpose2d(*ins, stride=p.get("stride", 1), padding=p.get("padding", 0)),
    "add": lambda ins, p: add(*ins),
    "mul": lambda ins, p: mul(*ins),
    "relu": lambda ins, p: relu(*ins),
    "tanh": lambda ins, p: tanh(*ins),
    "sigmoid": lambda ins, p: sigmoid(*ins),
    "softmax": lambda ins, p: softmax(*ins, axis=p.get("axis", -1)),
    "mean-squared-error": lambda ins, p: mse(*ins),
    "cross-entropy-with-logits": lambda ins, p: cross_entropy_logits(ins[0], p["labels"]),
    "hinge": lambda ins, p: hinge(ins[0], p["labels"]),
    "l1": lambda ins, p: l1(*ins),
    "l2": lambda ins, p: l2(*ins),
    "reshape": lambda ins, p: reshape(ins[0], p["shape"]),
    "max-pool": lambda ins, p: maxpool2d(ins[0], p.get("k", 2)),
    "log": lambda ins, p: log(*ins),
    "sum": lambda ins, p: sumall(*ins),
    "scale": lambda ins, p: scale(ins[0], p["c"]),
}

OP_KINDS = tuple(sorted(_DISPATCH))


def forward_op(op_kind: str, inputs, params=None) -> Tensor:
    """String-dispatched entry point over the primitive op set."""
    if op_kind not in _DISPATCH:
        raise DimensionError(f"unknown op_kind {op_kind!r}")
    return _DISPATCH[op_kind](list(inputs), params or {})
