"""Minimal reverse-mode autodiff over dense float64 tensors.

A Tensor records the operator that produced it and links to its parents, so
the graph lives implicitly in the tensors. backward() on a scalar walks the
graph once in reverse topological order; every node counts how many times its
backward rule ran, which the test-suite uses to prove single-visit traversal.

Only the operators the extractor network needs are provided; there is no
GPU path and broadcasting is limited to what numpy does elementwise.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

LN_EPS = 1e-8  # layer-norm variance stabilizer


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn",
                 "op", "backward_runs")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward_fn = None
        self.op = "leaf"
        self.backward_runs = 0

    # -- structure ---------------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op}, grad={self.requires_grad})"

    # -- autograd ----------------------------------------------------------

    def backward(self):
        """Reverse-mode accumulation from this scalar into every ancestor."""
        if self.data.size != 1:
            raise ValueError(f"backward() needs a scalar, got shape {self.shape}")
        order = toposort(self)
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward_fn is not None and node.grad is not None:
                node._backward_fn(node.grad)
                node.backward_runs += 1

    # -- operator sugar ------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return slice_(self, key)

    def sum(self, axis=None, keepdims=False):
        return ssum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return smean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)


def _coerce(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents, backward_fn, op: str) -> Tensor:
    """Internal graph node; collapses to a constant when no parent needs grad."""
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward_fn = backward_fn
        out.op = op
    return out


def _acc(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(np.broadcast_to(g, t.data.shape))
    else:
        t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient over the axes numpy broadcast in the forward pass."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def toposort(root: Tensor) -> list[Tensor]:
    """Ancestors of `root` in topological order (iterative; graphs run deep)."""
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, int]] = [(root, 0)]
    while stack:
        node, i = stack.pop()
        if i == 0:
            if id(node) in visited:
                continue
            visited.add(id(node))
        if i < len(node._parents):
            stack.append((node, i + 1))
            parent = node._parents[i]
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, 0))
        else:
            order.append(node)
    return order


# -- elementwise arithmetic --------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    out_data = a.data + b.data

    def bwd(g):
        _acc(a, _unbroadcast(g, a.shape))
        _acc(b, _unbroadcast(g, b.shape))

    return _node(out_data, (a, b), bwd, "add")


def sub(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    out_data = a.data - b.data

    def bwd(g):
        _acc(a, _unbroadcast(g, a.shape))
        _acc(b, _unbroadcast(-g, b.shape))

    return _node(out_data, (a, b), bwd, "sub")


def mul(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    out_data = a.data * b.data

    def bwd(g):
        _acc(a, _unbroadcast(g * b.data, a.shape))
        _acc(b, _unbroadcast(g * a.data, b.shape))

    return _node(out_data, (a, b), bwd, "mul")


def div(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    out_data = a.data / b.data

    def bwd(g):
        _acc(a, _unbroadcast(g / b.data, a.shape))
        _acc(b, _unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _node(out_data, (a, b), bwd, "div")


def power(a, p: float) -> Tensor:
    a = _coerce(a)
    p = float(p)
    out_data = a.data ** p

    def bwd(g):
        _acc(a, g * p * a.data ** (p - 1.0))

    return _node(out_data, (a,), bwd, "pow")


def exp(a) -> Tensor:
    a = _coerce(a)
    out_data = np.exp(a.data)

    def bwd(g):
        _acc(a, g * out_data)

    return _node(out_data, (a,), bwd, "exp")


def log(a) -> Tensor:
    a = _coerce(a)
    out_data = np.log(a.data)

    def bwd(g):
        _acc(a, g / a.data)

    return _node(out_data, (a,), bwd, "log")


def log10(a) -> Tensor:
    return mul(log(a), 1.0 / np.log(10.0))


def sqrt(a) -> Tensor:
    a = _coerce(a)
    out_data = np.sqrt(a.data)

    def bwd(g):
        _acc(a, g * 0.5 / out_data)

    return _node(out_data, (a,), bwd, "sqrt")


# -- activations --------------------------------------------------------------

def relu(a) -> Tensor:
    a = _coerce(a)
    mask = a.data > 0

    def bwd(g):
        _acc(a, g * mask)

    return _node(a.data * mask, (a,), bwd, "relu")


def prelu(a, slope) -> Tensor:
    """Parametric relu with a single learned slope on the negative side."""
    a, slope = _coerce(a), _coerce(slope)
    pos = a.data > 0
    out_data = np.where(pos, a.data, slope.data * a.data)

    def bwd(g):
        _acc(a, g * np.where(pos, 1.0, slope.data))
        _acc(slope, np.sum(g * np.where(pos, 0.0, a.data)).reshape(slope.shape))

    return _node(out_data, (a, slope), bwd, "prelu")


def sigmoid(a) -> Tensor:
    a = _coerce(a)
    out_data = 1.0 / (1.0 + np.exp(-a.data))

    def bwd(g):
        _acc(a, g * out_data * (1.0 - out_data))

    return _node(out_data, (a,), bwd, "sigmoid")


def tanh(a) -> Tensor:
    a = _coerce(a)
    out_data = np.tanh(a.data)

    def bwd(g):
        _acc(a, g * (1.0 - out_data * out_data))

    return _node(out_data, (a,), bwd, "tanh")


# -- shape and indexing -------------------------------------------------------

def reshape(a, shape) -> Tensor:
    a = _coerce(a)
    old = a.shape

    def bwd(g):
        _acc(a, g.reshape(old))

    return _node(a.data.reshape(shape), (a,), bwd, "reshape")


def transpose(a, axes=None) -> Tensor:
    a = _coerce(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inverse = tuple(np.argsort(axes))

    def bwd(g):
        _acc(a, g.transpose(inverse))

    return _node(a.data.transpose(axes), (a,), bwd, "transpose")


def slice_(a, key) -> Tensor:
    """Basic indexing (ints/slices); gradients scatter back into place."""
    a = _coerce(a)

    def bwd(g):
        if a.grad is None:
            a.grad = np.zeros_like(a.data)
        a.grad[key] += g

    return _node(a.data[key], (a,), bwd, "slice")


def index_select(a, axis: int, indices) -> Tensor:
    """Gather along one axis; repeated indices accumulate gradient."""
    a = _coerce(a)
    idx = np.asarray(indices, dtype=np.intp)
    out_data = np.take(a.data, idx, axis=axis)

    def bwd(g):
        da = np.zeros_like(a.data)
        np.add.at(np.moveaxis(da, axis, 0), idx, np.moveaxis(g, axis, 0))
        _acc(a, da)

    return _node(out_data, (a,), bwd, "index_select")


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [_coerce(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
            _acc(t, piece)

    return _node(np.concatenate([t.data for t in tensors], axis=axis),
                 tuple(tensors), bwd, "concat")


def stack(tensors, axis: int = 0) -> Tensor:
    tensors = [_coerce(t) for t in tensors]

    def bwd(g):
        for i, t in enumerate(tensors):
            _acc(t, np.take(g, i, axis=axis))

    return _node(np.stack([t.data for t in tensors], axis=axis),
                 tuple(tensors), bwd, "stack")


def pad_axis(a, axis: int, before: int, after: int) -> Tensor:
    """Zero-pad one axis."""
    a = _coerce(a)
    widths = [(0, 0)] * a.ndim
    widths[axis] = (before, after)
    sl = [slice(None)] * a.ndim
    sl[axis] = slice(before, before + a.shape[axis])
    sl = tuple(sl)

    def bwd(g):
        _acc(a, g[sl])

    return _node(np.pad(a.data, widths), (a,), bwd, "pad")


# -- reductions ----------------------------------------------------------------

def ssum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _coerce(a)
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def bwd(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _acc(a, np.broadcast_to(g, a.shape).copy())

    return _node(out_data, (a,), bwd, "sum")


def smean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _coerce(a)
    count = a.size if axis is None else a.shape[axis]
    return mul(ssum(a, axis=axis, keepdims=keepdims), 1.0 / count)


# -- linear algebra --------------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError(f"matmul is 2-D only, got {a.shape} @ {b.shape}")

    def bwd(g):
        _acc(a, g @ b.data.T)
        _acc(b, a.data.T @ g)

    return _node(a.data @ b.data, (a, b), bwd, "matmul")


def linear(x, w, b=None) -> Tensor:
    """Affine map over the trailing feature axis: x [rows, in] @ w [in, out] + b."""
    out = matmul(x, w)
    if b is not None:
        out = add(out, b)
    return out


def conv1d(x, w, b=None, stride: int = 1, groups: int = 1) -> Tensor:
    """Strided cross-correlation. x: [Cin, T], w: [Cout, Cin/groups, k] -> [Cout, T'].

    T' = floor((T - k)/stride) + 1; no implicit padding (compose with pad_axis).
    """
    x, w = _coerce(x), _coerce(w)
    cin, t_in = x.shape
    cout, cin_g, k = w.shape
    if cin % groups or cout % groups or cin_g != cin // groups:
        raise ValueError(f"bad grouping: x {x.shape}, w {w.shape}, groups {groups}")
    if t_in < k:
        raise ValueError(f"input length {t_in} shorter than kernel {k}")
    t_out = (t_in - k) // stride + 1
    xd, wd = x.data, w.data
    depthwise = groups == cin == cout
    og = cout // groups

    out_data = np.zeros((cout, t_out))
    for i in range(k):
        xs = xd[:, i : i + stride * t_out : stride]
        if groups == 1:
            out_data += wd[:, :, i] @ xs
        elif depthwise:
            out_data += wd[:, 0, i : i + 1] * xs
        else:
            for gi in range(groups):
                out_data[gi * og : (gi + 1) * og] += (
                    wd[gi * og : (gi + 1) * og, :, i]
                    @ xs[gi * cin_g : (gi + 1) * cin_g]
                )
    parents = [x, w]
    if b is not None:
        b = _coerce(b)
        out_data = out_data + b.data[:, None]
        parents.append(b)

    def bwd(g):
        if x.requires_grad:
            dx = np.zeros_like(xd)
            for i in range(k):
                view = dx[:, i : i + stride * t_out : stride]
                if groups == 1:
                    view += wd[:, :, i].T @ g
                elif depthwise:
                    view += wd[:, 0, i : i + 1] * g
                else:
                    for gi in range(groups):
                        view[gi * cin_g : (gi + 1) * cin_g] += (
                            wd[gi * og : (gi + 1) * og, :, i].T
                            @ g[gi * og : (gi + 1) * og]
                        )
            _acc(x, dx)
        if w.requires_grad:
            dw = np.zeros_like(wd)
            for i in range(k):
                xs = xd[:, i : i + stride * t_out : stride]
                if groups == 1:
                    dw[:, :, i] = g @ xs.T
                elif depthwise:
                    dw[:, 0, i] = np.sum(g * xs, axis=1)
                else:
                    for gi in range(groups):
                        dw[gi * og : (gi + 1) * og, :, i] = (
                            g[gi * og : (gi + 1) * og]
                            @ xs[gi * cin_g : (gi + 1) * cin_g].T
                        )
            _acc(w, dw)
        if b is not None:
            _acc(b, g.sum(axis=1))

    return _node(out_data, tuple(parents), bwd, "conv1d")


# -- normalization -----------------------------------------------------------------

def layer_norm(x, gain, bias, axis: int = 0, eps: float = LN_EPS) -> Tensor:
    """Normalize over one axis (channels, per time step) with learned gain/bias.

    An all-zero slice normalizes to zero before gain/bias: the eps stabilizer
    keeps the division finite instead of blowing up on zero variance.
    """
    mu = smean(x, axis=axis, keepdims=True)
    centered = sub(x, mu)
    var = smean(mul(centered, centered), axis=axis, keepdims=True)
    normed = div(centered, sqrt(add(var, eps)))
    return add(mul(normed, gain), bias)


def global_layer_norm(x, gain=None, bias=None, eps: float = LN_EPS) -> Tensor:
    """Normalize over all elements at once; gain/bias optional."""
    mu = smean(x)
    centered = sub(x, mu)
    var = smean(mul(centered, centered))
    normed = div(centered, sqrt(add(var, eps)))
    if gain is not None:
        normed = add(mul(normed, gain), bias)
    return normed


# -- recurrence ----------------------------------------------------------------------

def lstm_cell(xt, h, c, wx, wh, b):
    """One fused LSTM step with a hand-derived backward.

    xt: [batch, F], h/c: [batch, H], wx: [F, 4H], wh: [H, 4H], b: [4H];
    gate order i, f, g, o. Returns (h_new, c_new). Fusing the step keeps the
    recurrence from exploding into per-gate graph nodes.
    """
    xt, h, c = _coerce(xt), _coerce(h), _coerce(c)
    wx, wh, b = _coerce(wx), _coerce(wh), _coerce(b)
    hidden = wh.shape[0]
    z = xt.data @ wx.data + h.data @ wh.data + b.data
    i = 1.0 / (1.0 + np.exp(-z[:, :hidden]))
    f = 1.0 / (1.0 + np.exp(-z[:, hidden : 2 * hidden]))
    g = np.tanh(z[:, 2 * hidden : 3 * hidden])
    o = 1.0 / (1.0 + np.exp(-z[:, 3 * hidden :]))
    c_new = f * c.data + i * g
    tanh_c = np.tanh(c_new)
    h_new = o * tanh_c

    def bwd(grad):
        dh = grad[:, :hidden]
        dc = grad[:, hidden:] + dh * o * (1.0 - tanh_c * tanh_c)
        dz = np.concatenate([
            (dc * g) * i * (1.0 - i),
            (dc * c.data) * f * (1.0 - f),
            (dc * i) * (1.0 - g * g),
            (dh * tanh_c) * o * (1.0 - o),
        ], axis=1)
        if xt.requires_grad:
            _acc(xt, dz @ wx.data.T)
        if h.requires_grad:
            _acc(h, dz @ wh.data.T)
        _acc(c, dc * f)
        if wx.requires_grad:
            _acc(wx, xt.data.T @ dz)
        if wh.requires_grad:
            _acc(wh, h.data.T @ dz)
        _acc(b, dz.sum(axis=0))

    out = _node(np.concatenate([h_new, c_new], axis=1),
                (xt, h, c, wx, wh, b), bwd, "lstm_cell")
    return out[:, :hidden], out[:, hidden:]


def _lstm_direction(x, wx, wh, b, reverse: bool):
    t_len, batch, _ = x.shape
    hidden = wh.shape[0]
    h = Tensor(np.zeros((batch, hidden)))
    c = Tensor(np.zeros((batch, hidden)))
    outs: list[Tensor] = [None] * t_len  # type: ignore[list-item]
    steps = range(t_len - 1, -1, -1) if reverse else range(t_len)
    for t in steps:
        h, c = lstm_cell(x[t], h, c, wx, wh, b)
        outs[t] = h
    return outs


def bilstm(x, wx_f, wh_f, b_f, wx_b, wh_b, b_b) -> Tensor:
    """Bidirectional LSTM over the leading time axis.

    x: [T, F] or [T, batch, F]; output concatenates the two directions per
    step -> [T, 2H] or [T, batch, 2H]. Initial states are zero.
    """
    x = _coerce(x)
    squeeze = x.ndim == 2
    if squeeze:
        x = reshape(x, (x.shape[0], 1, x.shape[1]))
    fwd = _lstm_direction(x, wx_f, wh_f, b_f, reverse=False)
    bwd_ = _lstm_direction(x, wx_b, wh_b, b_b, reverse=True)
    out = concat([stack(fwd, axis=0), stack(bwd_, axis=0)], axis=2)
    if squeeze:
        out = reshape(out, (out.shape[0], out.shape[2]))
    return out


# -- chunking for dual-path processing --------------------------------------------------

def chunk_geometry(t_len: int, chunk: int) -> tuple[int, int, int, int]:
    """(hop, gap, padded_total, num_chunks) for splitting t_len into chunks.

    hop = chunk/2; the signal gets `gap` zeros appended to land on the hop
    grid plus `hop` zeros at both ends, after which num_chunks = padded/hop - 1.
    On exact-fit lengths this matches num_chunks = 2*t_len/chunk + 1.
    """
    if chunk < 2 or chunk % 2:
        raise ValueError(f"chunk size must be even and >= 2, got {chunk}")
    if t_len < 1:
        raise ValueError("cannot chunk an empty sequence")
    hop = chunk // 2
    n_hops = -(-t_len // hop)
    gap = n_hops * hop - t_len
    total = t_len + gap + 2 * hop
    return hop, gap, total, n_hops + 1


def segment_chunks(x, chunk: int) -> Tensor:
    """Split x [B, T] into half-overlapping chunks -> [B, chunk, P]."""
    x = _coerce(x)
    if x.ndim != 2:
        raise ValueError(f"segment_chunks expects [B, T], got {x.shape}")
    b, t_len = x.shape
    hop, _, total, num = chunk_geometry(t_len, chunk)
    xp = np.zeros((b, total))
    xp[:, hop : hop + t_len] = x.data
    out_data = np.stack([xp[:, p * hop : p * hop + chunk] for p in range(num)], axis=2)

    def bwd(g):
        gp = np.zeros((b, total))
        for p in range(num):
            gp[:, p * hop : p * hop + chunk] += g[:, :, p]
        _acc(x, gp[:, hop : hop + t_len])

    return _node(out_data, (x,), bwd, "segment_chunks")


def aggregate_chunks(y, out_len: int) -> Tensor:
    """Inverse of segment_chunks: count-normalized overlap-add back to [B, out_len]."""
    y = _coerce(y)
    if y.ndim != 3:
        raise ValueError(f"aggregate_chunks expects [B, K, P], got {y.shape}")
    b, chunk, num = y.shape
    hop, _, total, expected = chunk_geometry(out_len, chunk)
    if num != expected:
        raise ValueError(
            f"{num} chunks of size {chunk} do not aggregate to length {out_len}"
        )
    counts = np.zeros(total)
    for p in range(num):
        counts[p * hop : p * hop + chunk] += 1.0
    acc = np.zeros((b, total))
    for p in range(num):
        acc[:, p * hop : p * hop + chunk] += y.data[:, :, p]
    acc /= counts
    out_data = acc[:, hop : hop + out_len]

    def bwd(g):
        ge = np.zeros((b, total))
        ge[:, hop : hop + out_len] = g
        ge /= counts
        dy = np.stack([ge[:, p * hop : p * hop + chunk] for p in range(num)], axis=2)
        _acc(y, dy)

    return _node(out_data, (y,), bwd, "aggregate_chunks")


def overlap_add_frames(frames, hop: int) -> Tensor:
    """Sum frames [T, L] into a waveform [(T-1)*hop + L]; the decoder's OnA."""
    frames = _coerce(frames)
    num, flen = frames.shape
    out_data = np.zeros((num - 1) * hop + flen)
    for t in range(num):
        out_data[t * hop : t * hop + flen] += frames.data[t]

    def bwd(g):
        df = np.stack([g[t * hop : t * hop + flen] for t in range(num)], axis=0)
        _acc(frames, df)

    return _node(out_data, (frames,), bwd, "overlap_add")


@contextmanager
def no_grad(tensors):
    """Temporarily clear requires_grad; ops then fold to constants, so
    inference forwards build no graph."""
    tensors = list(tensors)
    flags = [t.requires_grad for t in tensors]
    for t in tensors:
        t.requires_grad = False
    try:
        yield
    finally:
        for t, f in zip(tensors, flags):
            t.requires_grad = f


# -- optimization -------------------------------------------------------------------------

class Adam:
    """Adam with bias correction; beta/eps defaults are the usual ones."""

    def __init__(self, params, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.params = [p for p in params if p.requires_grad]
        self.lr = float(lr)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for p, m, v in zip(self.params, self._m, self._v):
            if p.grad is None:
                continue
            g = p.grad
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            m_hat = m / (1.0 - b1 ** self.t)
            v_hat = v / (1.0 - b2 ** self.t)
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
