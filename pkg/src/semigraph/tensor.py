"""Small dense tensor library with reverse-mode differentiation.

Everything is float64.  Operations record their inputs and a backward
closure on the output tensor; ``backward`` walks the resulting graph in
reverse topological order.  The op set is exactly what the graph model
needs: matmul, broadcasting add/mul, activations, concat, row gathers,
a fused LSTM, dropout and the two cross-entropy losses.
"""

from __future__ import annotations

import contextlib
import struct
from typing import Callable, Iterable, Sequence

import numpy as np

_GRAD_ENABLED = True


class ShapeError(ValueError):
    def __init__(self, op: str, *shapes):
        self.shapes = shapes
        joined = " vs ".join(str(tuple(s)) for s in shapes)
        super().__init__(f"{op}: incompatible shapes {joined}")


class NonFiniteError(ValueError):
    pass


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False, *, check_finite: bool = False):
        arr = np.array(data, dtype=np.float64)
        if check_finite and not np.all(np.isfinite(arr)):
            raise NonFiniteError("tensor contains NaN or Inf")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(arr) if requires_grad else None
        self._parents: tuple = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self.op = "leaf"

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def backward(self) -> None:
        backward(self)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data: np.ndarray, parents: Sequence[Tensor], op: str, backward_fn) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.op = op
    needs = _GRAD_ENABLED and any(p.requires_grad for p in parents)
    out.requires_grad = needs
    if needs:
        out._parents = tuple(parents)
        out._backward = backward_fn
    else:
        out._parents = ()
        out._backward = None
    return out


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64, copy=True)
    else:
        t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> tuple:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, a.shape, b.shape) from None


# ---------------------------------------------------------------- arithmetic


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape("add", a, b)

    def bw(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))

    return _result(a.data + b.data, (a, b), "add", bw)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape("sub", a, b)

    def bw(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(-g, b.shape))

    return _result(a.data - b.data, (a, b), "sub", bw)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape("mul", a, b)

    def bw(g):
        _accumulate(a, _unbroadcast(g * b.data, a.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.shape))

    return _result(a.data * b.data, (a, b), "mul", bw)


def scale(a: Tensor, c: float) -> Tensor:
    def bw(g):
        _accumulate(a, g * c)

    return _result(a.data * c, (a,), "scale", bw)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape)

    def bw(g):
        if a.requires_grad:
            _accumulate(a, g @ b.data.T)
        if b.requires_grad:
            _accumulate(b, a.data.T @ g)

    return _result(a.data @ b.data, (a, b), "matmul", bw)


def sum_all(a: Tensor) -> Tensor:
    def bw(g):
        _accumulate(a, np.broadcast_to(g, a.shape))

    return _result(np.array(a.data.sum()), (a,), "sum", bw)


def mean_all(a: Tensor) -> Tensor:
    n = a.data.size

    def bw(g):
        _accumulate(a, np.broadcast_to(g / n, a.shape))

    return _result(np.array(a.data.mean()), (a,), "mean", bw)


# --------------------------------------------------------------- activations


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form never overflows
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0

    def bw(g):
        _accumulate(a, g * mask)

    return _result(a.data * mask, (a,), "relu", bw)


def sigmoid(a: Tensor) -> Tensor:
    s = _sigmoid(a.data)

    def bw(g):
        _accumulate(a, g * s * (1.0 - s))

    return _result(s, (a,), "sigmoid", bw)


def tanh(a: Tensor) -> Tensor:
    t = np.tanh(a.data)

    def bw(g):
        _accumulate(a, g * (1.0 - t * t))

    return _result(t, (a,), "tanh", bw)


# ------------------------------------------------------------------- shaping


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        data = a.data.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", a.shape, tuple(shape)) from None

    def bw(g):
        _accumulate(a, g.reshape(a.shape))

    return _result(data, (a,), "reshape", bw)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError("concat", *(t.shape for t in tensors)) from None
    ax = axis % data.ndim
    bounds = np.cumsum([0] + [t.shape[ax] for t in tensors])

    def bw(g):
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[ax] = slice(lo, hi)
                _accumulate(t, g[tuple(idx)])

    return _result(data, tensors, "concat", bw)


def take_rows(a: Tensor, index) -> Tensor:
    """Gather along the first axis; gradient scatter-adds back."""
    index = np.asarray(index, dtype=np.int64)
    if index.size and (index.min() < 0 or index.max() >= a.shape[0]):
        raise IndexError(f"take_rows: index out of range for {a.shape[0]} rows")

    def bw(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            np.add.at(full, index, g)
            _accumulate(a, full)

    return _result(a.data[index], (a,), "take_rows", bw)


def mean_pool_rows(a: Tensor) -> Tensor:
    """Average over the first axis of a 2-D tensor."""
    if a.ndim != 2 or a.shape[0] == 0:
        raise ShapeError("mean_pool_rows", a.shape)
    n = a.shape[0]

    def bw(g):
        _accumulate(a, np.broadcast_to(g / n, a.shape))

    return _result(a.data.mean(axis=0), (a,), "mean_pool_rows", bw)


# ---------------------------------------------------------------- stochastic


def dropout(a: Tensor, p: float, train: bool, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout.  Identity when not training or when p == 0."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {p}")
    if not train or p == 0.0:
        return a
    if rng is None:
        raise ValueError("dropout in training mode needs an explicit rng")
    keep = (rng.random(a.shape) >= p) / (1.0 - p)

    def bw(g):
        _accumulate(a, g * keep)

    return _result(a.data * keep, (a,), "dropout", bw)


# -------------------------------------------------------------------- losses


def softmax_cross_entropy(logits: Tensor, targets) -> Tensor:
    """Mean negative log-likelihood of integer targets.

    ``logits`` is (V,) with a scalar target, or (n, V) with n targets.
    """
    single = logits.ndim == 1
    z = logits.data[None, :] if single else logits.data
    t = np.atleast_1d(np.asarray(targets, dtype=np.int64))
    if z.ndim != 2 or t.shape != (z.shape[0],):
        raise ShapeError("softmax_cross_entropy", logits.shape, t.shape)
    if t.size and (t.min() < 0 or t.max() >= z.shape[1]):
        raise IndexError("softmax_cross_entropy: target id out of range")
    shifted = z - z.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(z.shape[0])
    nll = logsum - shifted[rows, t]
    n = z.shape[0]

    def bw(g):
        probs = np.exp(shifted - logsum[:, None])
        probs[rows, t] -= 1.0
        probs *= g / n
        _accumulate(logits, probs[0] if single else probs)

    return _result(np.array(nll.mean()), (logits,), "softmax_xent", bw)


BCE_EPS = 1e-12


def binary_cross_entropy(scores: Tensor, labels) -> Tensor:
    """Mean of -[l ln y + (1-l) ln(1-y)] with y clamped to [eps, 1-eps]."""
    lab = np.asarray(labels, dtype=np.float64).reshape(scores.shape)
    y = np.clip(scores.data, BCE_EPS, 1.0 - BCE_EPS)
    loss = -(lab * np.log(y) + (1.0 - lab) * np.log(1.0 - y))
    n = max(loss.size, 1)
    inside = (scores.data > BCE_EPS) & (scores.data < 1.0 - BCE_EPS)

    def bw(g):
        dy = (-(lab / y) + (1.0 - lab) / (1.0 - y)) * inside
        _accumulate(scores, dy * (g / n))

    return _result(np.array(loss.mean()), (scores,), "bce", bw)


# ---------------------------------------------------------------------- LSTM


def lstm(x: Tensor, wx: Tensor, wh: Tensor, b: Tensor) -> Tensor:
    """Unidirectional LSTM over (B, T, D) inputs, zero initial state.

    Gate layout in the 4H columns is input, forget, cell, output.
    Returns the (B, T, H) hidden states.  Backward is hand-written BPTT.
    """
    if x.ndim != 3 or wx.shape[0] != x.shape[2] or wh.shape[1] != wx.shape[1] or wh.shape[1] != 4 * wh.shape[0]:
        raise ShapeError("lstm", x.shape, wx.shape, wh.shape)
    B, T, D = x.shape
    H = wh.shape[0]
    xz = (x.data.reshape(B * T, D) @ wx.data + b.data).reshape(B, T, 4 * H)
    gates = np.empty((B, T, 4 * H))
    cs = np.empty((B, T, H))
    hs = np.empty((B, T, H))
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    for t in range(T):
        z = xz[:, t] + h @ wh.data
        s = _sigmoid(z)
        gi, gf, go = s[:, :H], s[:, H:2 * H], s[:, 3 * H:]
        gg = np.tanh(z[:, 2 * H:3 * H])
        c = gf * c + gi * gg
        h = go * np.tanh(c)
        gates[:, t, :H] = gi
        gates[:, t, H:2 * H] = gf
        gates[:, t, 2 * H:3 * H] = gg
        gates[:, t, 3 * H:] = go
        cs[:, t] = c
        hs[:, t] = h

    def bw(gout):
        dz_all = np.empty((B, T, 4 * H))
        dh_next = np.zeros((B, H))
        dc_next = np.zeros((B, H))
        for t in range(T - 1, -1, -1):
            gi = gates[:, t, :H]
            gf = gates[:, t, H:2 * H]
            gg = gates[:, t, 2 * H:3 * H]
            go = gates[:, t, 3 * H:]
            tc = np.tanh(cs[:, t])
            c_prev = cs[:, t - 1] if t > 0 else np.zeros((B, H))
            dh = gout[:, t] + dh_next
            dc = dh * go * (1.0 - tc * tc) + dc_next
            dz = dz_all[:, t]
            dz[:, :H] = dc * gg * gi * (1.0 - gi)
            dz[:, H:2 * H] = dc * c_prev * gf * (1.0 - gf)
            dz[:, 2 * H:3 * H] = dc * gi * (1.0 - gg * gg)
            dz[:, 3 * H:] = dh * tc * go * (1.0 - go)
            dc_next = dc * gf
            dh_next = dz @ wh.data.T
        flat = dz_all.reshape(B * T, 4 * H)
        if x.requires_grad:
            _accumulate(x, (flat @ wx.data.T).reshape(B, T, D))
        if wx.requires_grad:
            _accumulate(wx, x.data.reshape(B * T, D).T @ flat)
        if wh.requires_grad and T > 1:
            h_prev = hs[:, :-1].reshape(B * (T - 1), H)
            _accumulate(wh, h_prev.T @ dz_all[:, 1:].reshape(B * (T - 1), 4 * H))
        elif wh.requires_grad:
            _accumulate(wh, np.zeros_like(wh.data))
        if b.requires_grad:
            _accumulate(b, flat.sum(axis=0))

    return _result(hs, (x, wx, wh, b), "lstm", bw)


# ------------------------------------------------------------------ backward


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(t) into ``t.grad`` for every tensor requiring grad."""
    if loss.data.size != 1:
        raise ShapeError("backward needs a scalar loss", loss.shape)
    if not loss.requires_grad:
        return
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    # interior nodes get fresh buffers; leaves keep accumulating
    for node in order:
        if node._backward is not None:
            node.grad = None
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


def finite_difference_check(
    f: Callable[[], Tensor],
    params: Tensor | Iterable[Tensor],
    h: float = 1e-6,
) -> float:
    """Max over coordinates of |analytic - numeric| / max(1, |analytic|, |numeric|).

    ``f`` is evaluated with no arguments and must rebuild the graph from the
    current values of ``params`` each call; it must be deterministic.
    """
    params = [params] if isinstance(params, Tensor) else list(params)
    for p in params:
        p.requires_grad = True
        p.grad = np.zeros_like(p.data)
    loss = f()
    backward(loss)
    analytic = [p.grad.copy() for p in params]
    worst = 0.0
    with no_grad():
        for p, a in zip(params, analytic):
            flat = p.data.reshape(-1)
            ga = a.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                up = f().item()
                flat[i] = orig - h
                down = f().item()
                flat[i] = orig
                num = (up - down) / (2 * h)
                err = abs(ga[i] - num) / max(1.0, abs(ga[i]), abs(num))
                worst = max(worst, err)
    return worst


# --------------------------------------------------------------- checkpoints

_MAGIC = b"SGCKPT01"


def save_tensors(path, tensors: dict[str, np.ndarray], meta: bytes = b"") -> None:
    """Write a named-tensor container.

    Layout (all little-endian): magic, u32 meta length, meta bytes,
    u32 tensor count, then per tensor: u16 name length, utf-8 name,
    u8 rank, u64 dims, float64 values in C order.
    """
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(meta)))
        fh.write(meta)
        fh.write(struct.pack("<I", len(tensors)))
        for name in sorted(tensors):
            arr = np.asarray(tensors[name], dtype="<f8")
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(arr.tobytes(order="C"))


def load_tensors(path) -> tuple[dict[str, np.ndarray], bytes]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != _MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    pos = 8

    def take(fmt):
        nonlocal pos
        vals = struct.unpack_from(fmt, blob, pos)
        pos += struct.calcsize(fmt)
        return vals

    (meta_len,) = take("<I")
    meta = blob[pos:pos + meta_len]
    pos += meta_len
    (count,) = take("<I")
    out = {}
    for _ in range(count):
        (nlen,) = take("<H")
        name = blob[pos:pos + nlen].decode("utf-8")
        pos += nlen
        (rank,) = take("<B")
        shape = take(f"<{rank}Q") if rank else ()
        size = int(np.prod(shape)) if rank else 1
        arr = np.frombuffer(blob, dtype="<f8", count=size, offset=pos).reshape(shape)
        pos += 8 * size
        out[name] = arr.astype(np.float64)
    return out, meta
