"""Reverse-mode autodiff over numpy arrays.

The graph is implicit: every Tensor produced by an op keeps its parent
tensors and a vjp closure.  vjps are themselves written in terms of the
ops below, so the backward pass can optionally be recorded onto the
graph (create_graph), which is what makes second-order quantities such
as gradient-norm penalties differentiable.

Convolution padding rule: windows are centred on t*stride, i.e. the
input is padded with (k-1)//2 zeros in front and with however many
zeros at the end complete the last window.  conv1d requires the input
length to be divisible by the stride and returns length/stride samples;
trans_conv1d is its adjoint and returns length*stride samples.
"""

from __future__ import annotations

import contextlib

import numpy as np

__all__ = [
    "GraphError",
    "Tensor",
    "activation",
    "add_bias",
    "backward",
    "concat",
    "conv1d",
    "dense",
    "embed",
    "grad",
    "grad_norm_penalty",
    "leaky_relu",
    "mean_all",
    "no_grad",
    "pad_axis",
    "phase_shift_indices",
    "relu",
    "reshape",
    "sample_uniform",
    "scale_channels",
    "sigmoid",
    "slice_axis",
    "softplus",
    "sum_axes",
    "take_time",
    "tanh",
    "trans_conv1d",
    "transpose",
]


class GraphError(ValueError):
    """A backward/grad request inconsistent with the recorded graph."""


_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording; ops return plain constants."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._vjp = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def detach(self):
        return Tensor(self.data)

    def item(self):
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype})"

    def __add__(self, other):
        return add_const(self, other) if np.isscalar(other) else add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul_const(self, other) if np.isscalar(other) else mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __sub__(self, other):
        return self + (-other if not np.isscalar(other) else -other)

    def __pow__(self, p):
        return pow_const(self, p)

    def __matmul__(self, other):
        return matmul(self, other)


def _node(data, parents, vjp):
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._vjp = vjp
    return out


def _same_shape(a, b, op):
    if a.data.shape != b.data.shape:
        raise ValueError(f"{op}: shape mismatch {a.data.shape} vs {b.data.shape}")


# ---------------------------------------------------------------- elementwise


def add(a, b):
    _same_shape(a, b, "add")
    return _node(a.data + b.data, (a, b), lambda g: (g, g))


def add_const(x, c):
    return _node(x.data + c, (x,), lambda g: (g,))


def mul(a, b):
    _same_shape(a, b, "mul")
    return _node(a.data * b.data, (a, b), lambda g: (mul(g, b), mul(g, a)))


def mul_const(x, c):
    return _node(x.data * c, (x,), lambda g: (mul_const(g, c),))


def neg(x):
    return _node(-x.data, (x,), lambda g: (neg(g),))


def sub(a, b):
    return add(a, neg(b))


def pow_const(x, p):
    return _node(
        x.data ** p, (x,), lambda g: (mul(g, mul_const(pow_const(x, p - 1), p)),)
    )


# ------------------------------------------------------------- linear algebra


def matmul(x, w):
    if x.ndim != 2 or w.ndim != 2:
        raise ValueError("matmul expects 2-d operands")
    return _node(
        x.data @ w.data,
        (x, w),
        lambda g: (matmul(g, transpose(w, (1, 0))), matmul(transpose(x, (1, 0)), g)),
    )


def transpose(x, axes):
    inv = tuple(np.argsort(axes))
    return _node(np.transpose(x.data, axes), (x,), lambda g: (transpose(g, inv),))


def add_bias(x, b):
    if b.ndim != 1 or b.data.shape[0] != x.data.shape[-1]:
        raise ValueError("add_bias: bias must match the last axis")
    lead = tuple(range(x.ndim - 1))
    return _node(x.data + b.data, (x, b), lambda g: (g, sum_axes(g, lead)))


def dense(x, w, b):
    """x @ w + b with x (n, in), w (in, out), b (out,)."""
    return add_bias(matmul(x, w), b)


# ------------------------------------------------------------------ reshaping


def reshape(x, shape):
    orig = x.data.shape
    return _node(x.data.reshape(shape), (x,), lambda g: (reshape(g, orig),))


def concat(a, b, axis):
    na = a.data.shape[axis]
    nb = b.data.shape[axis]
    return _node(
        np.concatenate([a.data, b.data], axis=axis),
        (a, b),
        lambda g: (slice_axis(g, axis, 0, na), slice_axis(g, axis, na, na + nb)),
    )


def slice_axis(x, axis, start, stop):
    total = x.data.shape[axis]
    sl = [slice(None)] * x.ndim
    sl[axis] = slice(start, stop)
    return _node(
        x.data[tuple(sl)],
        (x,),
        lambda g: (pad_axis(g, axis, start, total - stop),),
    )


def pad_axis(x, axis, before, after):
    pads = [(0, 0)] * x.ndim
    pads[axis] = (before, after)
    length = x.data.shape[axis]
    return _node(
        np.pad(x.data, pads),
        (x,),
        lambda g: (slice_axis(g, axis, before, before + length),),
    )


def broadcast_to(x, shape):
    if x.ndim != len(shape):
        raise ValueError("broadcast_to requires matching ndim")
    axes = tuple(i for i, (a, b) in enumerate(zip(x.data.shape, shape)) if a != b)
    for i in axes:
        if x.data.shape[i] != 1:
            raise ValueError(f"cannot broadcast {x.data.shape} to {shape}")
    return _node(
        np.broadcast_to(x.data, shape).copy(),
        (x,),
        lambda g: (sum_axes(g, axes, keepdims=True),),
    )


def sum_axes(x, axes=None, keepdims=False):
    if axes is None:
        axes = tuple(range(x.ndim))
    shape = x.data.shape

    def vjp(g):
        h = g if keepdims else reshape(
            g, tuple(1 if i in axes else s for i, s in enumerate(shape))
        )
        return (broadcast_to(h, shape),)

    return _node(np.sum(x.data, axis=axes, keepdims=keepdims), (x,), vjp)


def mean_all(x):
    return mul_const(sum_axes(x), 1.0 / x.data.size)


# ---------------------------------------------------------------- activations


def relu(x):
    factor = Tensor((x.data > 0).astype(x.data.dtype))
    return _node(np.maximum(x.data, 0), (x,), lambda g: (mul(g, factor),))


def leaky_relu(x, alpha=0.2):
    factor = Tensor(np.where(x.data >= 0, 1.0, alpha).astype(x.data.dtype))
    return _node(x.data * factor.data, (x,), lambda g: (mul(g, factor),))


def tanh(x):
    out = _node(np.tanh(x.data), (x,), None)
    out._vjp = lambda g: (mul(g, add_const(neg(mul(out, out)), 1.0)),)
    return out


def sigmoid(x):
    d = x.data
    y = np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.abs(d))), np.exp(-np.abs(d)) / (1.0 + np.exp(-np.abs(d))))
    y = y.astype(d.dtype)
    out = _node(y, (x,), None)
    out._vjp = lambda g: (mul(g, mul(out, add_const(neg(out), 1.0))),)
    return out


def softplus(x):
    d = x.data
    y = np.maximum(d, 0) + np.log1p(np.exp(-np.abs(d)))
    return _node(y.astype(d.dtype), (x,), lambda g: (mul(g, sigmoid(x)),))


_ACTIVATIONS = {"relu": relu, "lrelu": leaky_relu, "tanh": tanh, "sigmoid": sigmoid}


def activation(x, kind):
    try:
        return _ACTIVATIONS[kind](x)
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}") from None


# --------------------------------------------------------------- convolutions
#
# conv1d, its input gradient and its weight gradient are three views of
# one trilinear form, so each one's vjp is expressed with the other two
# and arbitrary-order differentiation closes.


def _pad_geometry(length, k, stride):
    out_len = length // stride
    pad_l = (k - 1) // 2
    pad_r = max((out_len - 1) * stride + k - pad_l - length, 0)
    return out_len, pad_l, pad_r


def _window_view(xp, k, stride, out_len):
    n, _, cin = xp.shape
    s0, s1, s2 = xp.strides
    return np.lib.stride_tricks.as_strided(
        xp, (n, out_len, k, cin), (s0, s1 * stride, s1, s2), writeable=False
    )


def _conv_forward(x, w, stride):
    n, length, cin = x.shape
    k, wc, cout = w.shape
    if wc != cin:
        raise ValueError(f"conv1d: kernel expects {wc} channels, input has {cin}")
    if length % stride:
        raise ValueError(f"conv1d: length {length} not divisible by stride {stride}")
    out_len, pad_l, pad_r = _pad_geometry(length, k, stride)
    xp = np.pad(x, ((0, 0), (pad_l, pad_r), (0, 0)))
    win = _window_view(xp, k, stride, out_len)
    return np.tensordot(win, w, axes=([2, 3], [0, 1]))


def _conv_input_grad(g, w, stride, in_len):
    n, out_len, cout = g.shape
    k, cin, _ = w.shape
    _, pad_l, pad_r = _pad_geometry(in_len, k, stride)
    tmp = np.tensordot(g, w, axes=([2], [2]))  # (n, out_len, k, cin)
    dxp = np.zeros((n, pad_l + in_len + pad_r, cin), dtype=tmp.dtype)
    for j in range(k):
        dxp[:, j : j + stride * out_len : stride, :] += tmp[:, :, j, :]
    return dxp[:, pad_l : pad_l + in_len, :]


def _conv_weight_grad(x, g, stride, k):
    n, length, cin = x.shape
    out_len, pad_l, pad_r = _pad_geometry(length, k, stride)
    xp = np.pad(x, ((0, 0), (pad_l, pad_r), (0, 0)))
    win = _window_view(xp, k, stride, out_len)
    return np.tensordot(win, g, axes=([0, 1], [0, 1]))  # (k, cin, cout)


def conv1d(x, w, stride):
    """Strided correlation; x (n, L, c_in), w (k, c_in, c_out) -> (n, L/stride, c_out)."""
    in_len = x.data.shape[1]
    k = w.data.shape[0]
    out = _conv_forward(x.data, w.data, stride)
    return _node(
        out,
        (x, w),
        lambda g: (
            conv1d_input_grad(g, w, stride, in_len),
            conv1d_weight_grad(x, g, stride, k),
        ),
    )


def conv1d_input_grad(g, w, stride, in_len):
    """Adjoint of conv1d in its input: (n, L/stride, c_out) -> (n, L, c_in)."""
    k = w.data.shape[0]
    out = _conv_input_grad(g.data, w.data, stride, in_len)
    return _node(
        out,
        (g, w),
        lambda u: (conv1d(u, w, stride), conv1d_weight_grad(u, g, stride, k)),
    )


def conv1d_weight_grad(x, g, stride, k):
    """Adjoint of conv1d in its kernel: pairs x with upstream g -> (k, c_in, c_out)."""
    in_len = x.data.shape[1]
    out = _conv_weight_grad(x.data, g.data, stride, k)
    return _node(
        out,
        (x, g),
        lambda u: (conv1d_input_grad(g, u, stride, in_len), conv1d(x, u, stride)),
    )


def trans_conv1d(x, w, stride):
    """Fractionally strided upsampling; x (n, L, c_in), w (k, c_in, c_out) -> (n, L*stride, c_out).

    Defined as the adjoint of conv1d with the kernel's channel axes
    swapped, which is what makes the (k, c_in, c_out) layout line up.
    """
    return conv1d_input_grad(x, transpose(w, (0, 2, 1)), stride, x.data.shape[1] * stride)


# ------------------------------------------------------------- gather/scatter


def phase_shift_indices(length, shifts):
    """Gather map for per-feature-map time shifts with reflection fill.

    shifts: int array (n, c); positive k moves content right by k.
    Reflection has no edge repeat: index -1 maps to 1, index L maps to L-2.
    """
    shifts = np.asarray(shifts)
    if np.any(np.abs(shifts) >= length):
        raise ValueError("shift magnitude must be below the sequence length")
    idx = np.arange(length)[None, :, None] - shifts[:, None, :]
    idx = np.abs(idx)
    return np.where(idx >= length, 2 * (length - 1) - idx, idx)


def take_time(x, idx):
    """Gather along axis 1 with an (n, L_out, c) index map."""
    length = x.data.shape[1]
    return _node(
        np.take_along_axis(x.data, idx, axis=1),
        (x,),
        lambda g: (scatter_time(g, idx, length),),
    )


def scatter_time(g, idx, out_len):
    """Adjoint of take_time: scatter-add rows back to their sources."""
    n, _, c = g.data.shape
    out = np.zeros((n, out_len, c), dtype=g.data.dtype)
    np.add.at(out, (np.arange(n)[:, None, None], idx, np.arange(c)[None, None, :]), g.data)
    return _node(out, (g,), lambda u: (take_time(u, idx),))


def embed(table, idx):
    """Row lookup; table (rows, cols), idx int (n,) -> (n, cols)."""
    rows = table.data.shape[0]
    return _node(table.data[idx], (table,), lambda g: (embed_grad(g, idx, rows),))


def embed_grad(g, idx, rows):
    out = np.zeros((rows,) + g.data.shape[1:], dtype=g.data.dtype)
    np.add.at(out, idx, g.data)
    return _node(out, (g,), lambda u: (embed(u, idx),))


def scale_channels(x, s):
    """Per-sample channel gains; x (n, L, c) * s (n, c) broadcast over time."""
    if x.ndim != 3 or s.ndim != 2 or x.data.shape[::2] != s.data.shape:
        raise ValueError("scale_channels: expected x (n, L, c) and s (n, c)")
    return _node(
        x.data * s.data[:, None, :],
        (x, s),
        lambda g: (scale_channels(g, s), sum_axes(mul(g, x), (1,))),
    )


# ------------------------------------------------------------------- backward


def _toposort(root):
    order, visited, stack = [], set(), [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))
    return order  # parents before children


def _grad_map(root, seed, create_graph):
    order = _toposort(root)
    gmap = {id(root): seed}
    ctx = contextlib.nullcontext() if create_graph else no_grad()
    with ctx:
        for node in reversed(order):
            g = gmap.get(id(node))
            if g is None or node._vjp is None:
                continue
            for parent, pg in zip(node._parents, node._vjp(g)):
                if pg is None or not parent.requires_grad:
                    continue
                prev = gmap.get(id(parent))
                gmap[id(parent)] = pg if prev is None else add(prev, pg)
    return order, gmap


def backward(loss):
    """Accumulate gradients of a scalar loss into every requires_grad leaf."""
    if loss.data.size != 1:
        raise GraphError("backward expects a scalar loss")
    if not loss.requires_grad:
        raise GraphError("loss does not depend on any requires_grad tensor")
    seed = Tensor(np.ones_like(loss.data))
    order, gmap = _grad_map(loss, seed, create_graph=False)
    for node in order:
        if node._vjp is None and node.requires_grad:
            g = gmap.get(id(node))
            if g is None:
                continue
            node.grad = g if node.grad is None else Tensor(node.grad.data + g.data)


def grad(output, inputs, create_graph=False):
    """Gradients of sum(output) w.r.t. inputs; never touches .grad.

    Returns one Tensor per input, or None where the input is unreachable.
    With create_graph=True the results are themselves differentiable.
    """
    seed = Tensor(np.ones_like(output.data))
    _, gmap = _grad_map(output, seed, create_graph)
    return [gmap.get(id(t)) for t in inputs]


def grad_norm_penalty(d_out, x_hat):
    """mean_i (||d d_out_i / d x_hat_i||_2 - 1)^2, differentiable in the critic.

    Valid when each row of d_out depends only on the matching row of
    x_hat, which holds for per-sample critics.
    """
    (gx,) = grad(d_out, [x_hat], create_graph=True)
    if gx is None:
        raise GraphError("x_hat does not influence d_out")
    axes = tuple(range(1, gx.ndim))
    norms = pow_const(sum_axes(mul(gx, gx), axes), 0.5)
    dev = add_const(norms, -1.0)
    return mean_all(mul(dev, dev))


# ------------------------------------------------------------------- sampling


def sample_uniform(shape, rng, dtype=np.float32):
    """i.i.d. samples from [-1, 1) as a constant leaf."""
    data = rng.random(shape, dtype=np.dtype(dtype)) * 2.0 - 1.0
    return Tensor(data)
