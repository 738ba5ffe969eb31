"""Minimal dense tensor with tape-based reverse-mode automatic differentiation.

Design notes
------------
* A ``Tensor`` wraps a real numpy array (float32 by default, float64 for
  gradient-check work) plus an optional ``grad`` buffer of the same shape.
* Gradients are recorded on an explicit ``Tape``.  While a tape is active
  (``with Tape() as tape:``) every primitive that touches a grad-requiring
  tensor appends one node; ``tape.backward(loss)`` then walks the nodes in
  reverse execution order, which is a valid topological order by
  construction, and visits each node exactly once.
* Without an active tape all primitives degrade to plain numpy calls, so
  inference paths pay no bookkeeping cost.
* Tapes are thread-local: independent tapes may run concurrently on
  disjoint data.  Parameters are shareable read-only across threads for
  inference; grad accumulation happens only inside a single-threaded
  backward pass.

Primitives are deliberately coarse (fused linear / layer_norm / softmax)
to keep the per-node Python overhead small on CPU.
"""

import threading

import numpy as np

from .errors import ConfigError, NumericsError, ShapeError, UsageError

_local = threading.local()


def _active_tape():
    return getattr(_local, "tape", None)


class Tensor:
    """A dense real tensor; immutable after construction except for grad."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{flag})"

    # operator sugar; all arithmetic goes through the module-level primitives
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def parameter(data, dtype=np.float32):
    """Wrap an array as a trainable parameter."""
    return Tensor(np.array(data, dtype=dtype), requires_grad=True)


def constant(data, dtype=None):
    """Wrap an array as a non-trainable tensor."""
    return Tensor(data, requires_grad=False, dtype=dtype)


class Tape:
    """Ordered record of primitive applications for one backward pass."""

    def __init__(self):
        self._nodes = []
        self._used = False

    def __enter__(self):
        if _active_tape() is not None:
            raise UsageError("a tape is already active on this thread")
        _local.tape = self
        return self

    def __exit__(self, exc_type, exc, tb):
        _local.tape = None
        return False

    def __len__(self):
        return len(self._nodes)

    def backward(self, loss):
        """Populate .grad for every tensor that contributed to the scalar loss."""
        if not isinstance(loss, Tensor):
            raise UsageError("backward expects a Tensor loss")
        if loss.size != 1:
            raise UsageError(f"backward requires a scalar loss, got shape {loss.shape}")
        if self._used:
            raise UsageError("this tape was already consumed by a backward pass")
        if _active_tape() is self:
            raise UsageError("call backward after leaving the recording context")
        self._used = True
        loss.grad = np.ones_like(loss.data)
        nodes = self._nodes
        for i in range(len(nodes) - 1, -1, -1):
            out, backward_fn = nodes[i]
            if out.grad is not None:
                backward_fn(out.grad)
                out.grad = None  # free intermediate grads as soon as possible
            nodes[i] = None
        nodes.clear()


def _accum(t, g):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=t.data.dtype)  # own the buffer
    else:
        t.grad += g


def _accum_slice(t, g, index):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad[index] += g


def _record(data, backward_fn, inputs):
    """Wrap ``data``; append a tape node when recording is on and relevant."""
    tape = _active_tape()
    out = Tensor(data)
    if tape is not None and any(
        isinstance(x, Tensor) and x.requires_grad for x in inputs
    ):
        out.requires_grad = True
        tape._nodes.append((out, backward_fn))
    return out


def _as_array(x, like):
    """Constants (scalars / ndarrays) are allowed as second operands."""
    if isinstance(x, Tensor):
        return x.data
    return np.asarray(x, dtype=like.dtype)


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b):
    bd = _as_array(b, a)
    y = a.data + bd

    def backward(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        if isinstance(b, Tensor):
            _accum(b, _unbroadcast(g, b.data.shape))

    return _record(y, backward, (a, b))


def sub(a, b):
    bd = _as_array(b, a)
    y = a.data - bd

    def backward(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        if isinstance(b, Tensor):
            _accum(b, _unbroadcast(-g, b.data.shape))

    return _record(y, backward, (a, b))


def neg(a):
    def backward(g):
        _accum(a, -g)

    return _record(-a.data, backward, (a,))


def mul(a, b):
    bd = _as_array(b, a)
    y = a.data * bd

    def backward(g):
        _accum(a, _unbroadcast(g * bd, a.data.shape))
        if isinstance(b, Tensor):
            _accum(b, _unbroadcast(g * a.data, b.data.shape))

    return _record(y, backward, (a, b))


def div(a, b):
    bd = _as_array(b, a)
    y = a.data / bd

    def backward(g):
        _accum(a, _unbroadcast(g / bd, a.data.shape))
        if isinstance(b, Tensor):
            _accum(b, _unbroadcast(-g * a.data / (bd * bd), b.data.shape))

    return _record(y, backward, (a, b))


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a, b):
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError(f"matmul needs >=2-d operands, got {a.data.shape} @ {b.data.shape}")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.data.shape} @ {b.data.shape}")
    y = a.data @ b.data

    def backward(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        _accum(a, _unbroadcast(ga, a.data.shape))
        _accum(b, _unbroadcast(gb, b.data.shape))

    return _record(y, backward, (a, b))


def linear(x, w, b=None):
    """Fused ``x @ w + b`` with ``w: [din, dout]`` and optional ``b: [dout]``."""
    din, dout = w.data.shape
    if x.data.shape[-1] != din:
        raise ShapeError(f"linear: input last dim {x.data.shape[-1]} != weight rows {din}")
    y = x.data @ w.data
    if b is not None:
        y += b.data

    def backward(g):
        _accum(x, g @ w.data.T)
        g2 = g.reshape(-1, dout)
        _accum(w, x.data.reshape(-1, din).T @ g2)
        if b is not None:
            _accum(b, g2.sum(axis=0))

    return _record(y, backward, (x, w) if b is None else (x, w, b))


# ---------------------------------------------------------------------------
# normalization and activations


def layer_norm(x, gamma, beta, eps=1e-5):
    """Per-token normalization over the last dimension, then affine."""
    c = x.data.shape[-1]
    if gamma.data.shape != (c,) or beta.data.shape != (c,):
        raise ShapeError(
            f"layer_norm: gamma/beta shapes {gamma.data.shape}/{beta.data.shape} "
            f"do not match channel dim {c}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = np.mean(xc * xc, axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    y = xhat * gamma.data + beta.data

    def backward(g):
        dxhat = g * gamma.data
        m1 = dxhat.mean(axis=-1, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
        _accum(x, inv * (dxhat - m1 - xhat * m2))
        g2 = g.reshape(-1, c)
        _accum(gamma, (g * xhat).reshape(-1, c).sum(axis=0))
        _accum(beta, g2.sum(axis=0))

    return _record(y, backward, (x, gamma, beta))


def softmax_lastdim(x):
    """Numerically stabilized softmax over the last dimension."""
    if x.data.shape[-1] == 0:
        raise ShapeError("softmax over an empty last dimension")
    if np.isnan(x.data).any():
        raise NumericsError("softmax input contains NaN")
    m = x.data.max(axis=-1, keepdims=True)
    e = np.exp(x.data - m)
    y = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        dot = (g * y).sum(axis=-1, keepdims=True)
        _accum(x, y * (g - dot))

    return _record(y, backward, (x,))


def lrelu(x, slope=0.01):
    y = np.where(x.data >= 0, x.data, slope * x.data)

    def backward(g):
        _accum(x, np.where(x.data >= 0, g, slope * g))

    return _record(y, backward, (x,))


def tanh(x):
    y = np.tanh(x.data)

    def backward(g):
        _accum(x, g * (1.0 - y * y))

    return _record(y, backward, (x,))


def sigmoid(x):
    with np.errstate(over="ignore"):
        y = 1.0 / (1.0 + np.exp(-x.data))

    def backward(g):
        _accum(x, g * y * (1.0 - y))

    return _record(y, backward, (x,))


# ---------------------------------------------------------------------------
# shape manipulation


def reshape(x, shape):
    y = x.data.reshape(shape)

    def backward(g):
        _accum(x, g.reshape(x.data.shape))

    return _record(y, backward, (x,))


def transpose(x, axes):
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    y = x.data.transpose(axes)

    def backward(g):
        _accum(x, g.transpose(inv))

    return _record(y, backward, (x,))


def concat(parts, axis=-1):
    datas = [p.data for p in parts]
    y = np.concatenate(datas, axis=axis)
    sizes = [d.shape[axis] for d in datas]

    def backward(g):
        offsets = np.cumsum([0] + sizes)
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            _accum(p, g[tuple(idx)])

    return _record(y, backward, tuple(parts))


def narrow(x, axis, start, size):
    """Contiguous slice of length ``size`` along ``axis``."""
    idx = [slice(None)] * x.data.ndim
    idx[axis] = slice(start, start + size)
    idx = tuple(idx)
    y = x.data[idx]

    def backward(g):
        _accum_slice(x, g, idx)

    return _record(y, backward, (x,))


def roll_grid(x, shift_h, shift_w):
    """Toroidal roll of a token grid laid out as [..., H, W, C]."""
    y = np.roll(x.data, (shift_h, shift_w), axis=(-3, -2))

    def backward(g):
        _accum(x, np.roll(g, (-shift_h, -shift_w), axis=(-3, -2)))

    return _record(y, backward, (x,))


# ---------------------------------------------------------------------------
# reductions


def tsum(x, axis=None, keepdims=False):
    y = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            _accum(x, np.broadcast_to(g, x.data.shape))
        else:
            if not keepdims:
                g = np.expand_dims(g, axis)
            _accum(x, np.broadcast_to(g, x.data.shape))

    return _record(y, backward, (x,))


def tmean(x, axis=None, keepdims=False):
    count = x.data.size if axis is None else x.data.shape[axis]
    y = x.data.mean(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            _accum(x, np.broadcast_to(g / count, x.data.shape))
        else:
            if not keepdims:
                g = np.expand_dims(g, axis)
            _accum(x, np.broadcast_to(g / count, x.data.shape))

    return _record(y, backward, (x,))


def identity_grad(x, values):
    """Forward ``values``; backward passes the upstream gradient unchanged.

    The generic straight-through primitive: used to give non-differentiable
    forward maps (e.g. quantization) a unit Jacobian during training.
    """
    values = np.asarray(values, dtype=x.data.dtype)
    if values.shape != x.data.shape:
        raise ShapeError(f"identity_grad: values shape {values.shape} != input {x.data.shape}")

    def backward(g):
        _accum(x, g)

    return _record(values, backward, (x,))


# ---------------------------------------------------------------------------
# token-grid rearrangements (compositions of reshape/transpose)


def _grid_dims(x, what):
    if x.data.ndim < 3:
        raise ShapeError(f"{what} expects [..., H, W, C], got shape {x.data.shape}")
    return x.data.shape[:-3], x.data.shape[-3], x.data.shape[-2], x.data.shape[-1]


def window_partition(x, win_h, win_w):
    """[..., H, W, C] -> [..., nWin, win_h*win_w, C] over non-overlapping windows."""
    lead, h, w, c = _grid_dims(x, "window_partition")
    if h % win_h or w % win_w:
        raise ConfigError(f"window ({win_h},{win_w}) does not tile grid ({h},{w})")
    nh, nw = h // win_h, w // win_w
    k = len(lead)
    t = reshape(x, lead + (nh, win_h, nw, win_w, c))
    t = transpose(t, tuple(range(k)) + (k, k + 2, k + 1, k + 3, k + 4))
    return reshape(t, lead + (nh * nw, win_h * win_w, c))


def window_reverse(xw, win_h, win_w, h, w):
    """Inverse of :func:`window_partition` for a grid of extents (h, w)."""
    if xw.data.ndim < 3:
        raise ShapeError(f"window_reverse expects [..., nWin, win, C], got {xw.data.shape}")
    lead = xw.data.shape[:-3]
    c = xw.data.shape[-1]
    nh, nw = h // win_h, w // win_w
    if xw.data.shape[-3] != nh * nw or xw.data.shape[-2] != win_h * win_w:
        raise ConfigError(
            f"window_reverse: got {xw.data.shape[-3:]} windows, expected "
            f"({nh * nw}, {win_h * win_w}, C) for grid ({h},{w})"
        )
    k = len(lead)
    t = reshape(xw, lead + (nh, nw, win_h, win_w, c))
    t = transpose(t, tuple(range(k)) + (k, k + 2, k + 1, k + 3, k + 4))
    return reshape(t, lead + (h, w, c))


def space_to_depth(x, factor):
    """[..., H, W, C] -> [..., H/f, W/f, f*f*C]; neighborhood features concatenated."""
    lead, h, w, c = _grid_dims(x, "space_to_depth")
    if h % factor or w % factor:
        raise ConfigError(f"downscale factor {factor} does not divide grid ({h},{w})")
    k = len(lead)
    t = reshape(x, lead + (h // factor, factor, w // factor, factor, c))
    t = transpose(t, tuple(range(k)) + (k, k + 2, k + 1, k + 3, k + 4))
    return reshape(t, lead + (h // factor, w // factor, factor * factor * c))


def depth_to_space(x, factor):
    """[..., H, W, f*f*C] -> [..., H*f, W*f, C]; inverse of :func:`space_to_depth`."""
    lead, h, w, c2 = _grid_dims(x, "depth_to_space")
    if c2 % (factor * factor):
        raise ConfigError(f"channels {c2} not divisible by {factor}^2")
    c = c2 // (factor * factor)
    k = len(lead)
    t = reshape(x, lead + (h, w, factor, factor, c))
    t = transpose(t, tuple(range(k)) + (k, k + 2, k + 1, k + 3, k + 4))
    return reshape(t, lead + (h * factor, w * factor, c))


# ---------------------------------------------------------------------------
# finite-difference gradient checking


def gradcheck(make_loss, wrt, eps=1e-6, rtol=1e-4, atol=1e-8):
    """Compare tape gradients of ``make_loss()`` against central differences.

    ``make_loss`` must be deterministic and return a scalar Tensor.  Returns
    (max relative error, failure list); each failure is (tensor index, flat
    element index, analytic, numeric).
    """
    with Tape() as tape:
        loss = make_loss()
    tape.backward(loss)
    analytic = []
    for t in wrt:
        analytic.append(np.zeros_like(t.data) if t.grad is None else t.grad.copy())
        t.grad = None

    worst = 0.0
    failures = []
    for ti, t in enumerate(wrt):
        flat = t.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            lp = float(make_loss().data)
            flat[i] = orig - eps
            lm = float(make_loss().data)
            flat[i] = orig
            num = (lp - lm) / (2 * eps)
            ana = float(analytic[ti].reshape(-1)[i])
            err = abs(ana - num)
            tol = atol + rtol * max(abs(ana), abs(num))
            rel = err / max(abs(ana), abs(num), 1e-12)
            worst = max(worst, rel if err > atol else 0.0)
            if err > tol:
                failures.append((ti, i, ana, num))
    return worst, failures
