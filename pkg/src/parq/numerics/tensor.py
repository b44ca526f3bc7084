"""Reverse-mode automatic differentiation over numpy arrays.

Everything is float64. The graph is define-by-run: each operation records
its parents and a backward closure on the output Tensor, so the graph is
rebuilt on every forward pass and exists only between forward and
backward(). Graphs are acyclic by construction (an op always creates a
fresh output node). Gradients are accumulated functionally (never updated
in place) so a backward pass can never alias or corrupt a gradient buffer
shared between branches.
"""

import contextlib

import numpy as np

DTYPE = np.float64

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (inference fast path)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """Array node in the autodiff graph.

    data: numpy float64 array holding the value.
    grad: numpy array of the same shape, populated by backward(), else None.
    requires_grad: whether this node (or anything upstream) wants gradients.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        if isinstance(data, Tensor):
            raise TypeError("wrapping a Tensor in a Tensor; use the value directly")
        self.data = np.asarray(data, dtype=DTYPE)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def detach(self):
        """Copy of the value with no graph history."""
        return Tensor(self.data.copy())

    def backward(self, grad=None):
        """Accumulate gradients of self w.r.t. every reachable parent.

        Without an explicit seed gradient, self must be a scalar.
        """
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed gradient needs a scalar")
            grad = np.ones_like(self.data)
        grad = np.asarray(grad, dtype=DTYPE)
        if grad.shape != self.data.shape:
            raise ValueError(f"seed gradient shape {grad.shape} != value shape {self.data.shape}")

        # Iterative post-order over the recorded graph.
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))

        _accumulate(self, grad)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # Operator sugar. All routes through the module-level ops below.
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

    def __neg__(self):
        return neg(self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __getitem__(self, key):
        return getitem(self, key)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) != 1 else shape[0])

    def transpose(self, axes):
        return transpose(self, axes)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"


def astensor(x):
    """Wrap array-likes as constant Tensors; pass Tensors through."""
    return x if isinstance(x, Tensor) else Tensor(x)


def _accumulate(t, g):
    # Functional accumulation: no in-place writes, g is never mutated.
    t.grad = g if t.grad is None else t.grad + g


def _make(data, parents, backward):
    """Build an op output node, recording history only when someone needs it."""
    req = _grad_enabled and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=req)
    if req:
        out._parents = parents
        out._backward = backward
    return out


def _unbroadcast(g, shape):
    """Reduce a gradient back to the shape it was broadcast from."""
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
    a, b = astensor(a), astensor(b)
    out_data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g, a.data.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(g, b.data.shape))

    return _make(out_data, (a, b), backward)


def sub(a, b):
    a, b = astensor(a), astensor(b)
    out_data = a.data - b.data

    def backward(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g, a.data.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(-g, b.data.shape))

    return _make(out_data, (a, b), backward)


def neg(a):
    a = astensor(a)

    def backward(g):
        _accumulate(a, -g)

    return _make(-a.data, (a,), backward)


def mul(a, b):
    a, b = astensor(a), astensor(b)
    out_data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(g * a.data, b.data.shape))

    return _make(out_data, (a, b), backward)


def div(a, b):
    a, b = astensor(a), astensor(b)
    out_data = a.data / b.data

    def backward(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g / b.data, a.data.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return _make(out_data, (a, b), backward)


def power(a, exponent):
    """a ** exponent for a constant scalar exponent."""
    a = astensor(a)
    e = float(exponent)
    out_data = a.data**e

    def backward(g):
        _accumulate(a, g * e * a.data ** (e - 1.0))

    return _make(out_data, (a,), backward)


def relu(a):
    a = astensor(a)
    out_data = np.maximum(a.data, 0.0)

    def backward(g):
        _accumulate(a, g * (a.data > 0.0))

    return _make(out_data, (a,), backward)


def abs_(a):
    a = astensor(a)

    def backward(g):
        _accumulate(a, g * np.sign(a.data))

    return _make(np.abs(a.data), (a,), backward)


def exp(a):
    a = astensor(a)
    out_data = np.exp(a.data)

    def backward(g):
        _accumulate(a, g * out_data)

    return _make(out_data, (a,), backward)


def log(a):
    a = astensor(a)

    def backward(g):
        _accumulate(a, g / a.data)

    return _make(np.log(a.data), (a,), backward)


# ---------------------------------------------------------------------------
# linear algebra and shape ops


def matmul(a, b):
    """np.matmul semantics for stacks of matrices; both operands ndim >= 2."""
    a, b = astensor(a), astensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul operands must have ndim >= 2; reshape vectors first")
    out_data = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            ga = g @ np.swapaxes(b.data, -1, -2)
            _accumulate(a, _unbroadcast(ga, a.data.shape))
        if b.requires_grad:
            gb = np.swapaxes(a.data, -1, -2) @ g
            _accumulate(b, _unbroadcast(gb, b.data.shape))

    return _make(out_data, (a, b), backward)


def reshape(a, shape):
    a = astensor(a)
    in_shape = a.data.shape

    def backward(g):
        _accumulate(a, g.reshape(in_shape))

    return _make(a.data.reshape(shape), (a,), backward)


def transpose(a, axes):
    a = astensor(a)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))

    def backward(g):
        _accumulate(a, g.transpose(inverse))

    return _make(a.data.transpose(axes), (a,), backward)


def concat(tensors, axis=0):
    tensors = [astensor(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum(sizes)[:-1]

    def backward(g):
        pieces = np.split(g, bounds, axis=axis)
        for t, piece in zip(tensors, pieces):
            if t.requires_grad:
                _accumulate(t, piece)

    return _make(out_data, tuple(tensors), backward)


def pad2d(a, pad):
    """Zero-pad the two leading axes of a [H, W, ...] array by `pad` on each side."""
    a = astensor(a)
    widths = ((pad, pad), (pad, pad)) + ((0, 0),) * (a.ndim - 2)

    def backward(g):
        _accumulate(a, g[pad:-pad, pad:-pad] if pad else g)

    return _make(np.pad(a.data, widths), (a,), backward)


def getitem(a, key):
    """Basic slicing/indexing. For integer-array gathers use gather_rows."""
    a = astensor(a)
    out_data = a.data[key]
    in_shape = a.data.shape

    def backward(g):
        buf = np.zeros(in_shape, dtype=DTYPE)
        np.add.at(buf, key, g)
        _accumulate(a, buf)

    return _make(out_data, (a,), backward)


def gather_rows(a, indices):
    """Select rows a[indices] along axis 0; indices may repeat.

    Backward scatter-adds per column with bincount, which is far faster than
    np.add.at for the repeated-index patterns im2col produces.
    """
    a = astensor(a)
    idx = np.asarray(indices)
    if idx.dtype.kind not in "iu" or idx.ndim != 1:
        raise ValueError("gather_rows needs a 1-D integer index array")
    out_data = a.data[idx]
    n_rows = a.data.shape[0]

    def backward(g):
        buf = np.zeros(a.data.shape, dtype=DTYPE)
        if a.ndim == 1:
            buf += np.bincount(idx, weights=g, minlength=n_rows)
        else:
            g2 = g.reshape(idx.size, -1)
            flat = buf.reshape(n_rows, -1)
            for c in range(g2.shape[1]):
                flat[:, c] = np.bincount(idx, weights=g2[:, c], minlength=n_rows)
        _accumulate(a, buf)

    return _make(out_data, (a,), backward)


def sum_(a, axis=None, keepdims=False):
    a = astensor(a)
    out_data = a.data.sum(axis=axis, keepdims=keepdims)
    in_shape = a.data.shape

    def backward(g):
        if axis is not None and not keepdims:
            axes = axis if isinstance(axis, tuple) else (axis,)
            g = np.expand_dims(g, axes)
        _accumulate(a, np.broadcast_to(g, in_shape).copy())

    return _make(out_data, (a,), backward)


def mean(a, axis=None, keepdims=False):
    a = astensor(a)
    out_data = a.data.mean(axis=axis, keepdims=keepdims)
    count = a.data.size / out_data.size
    in_shape = a.data.shape

    def backward(g):
        if axis is not None and not keepdims:
            axes = axis if isinstance(axis, tuple) else (axis,)
            g = np.expand_dims(g, axes)
        _accumulate(a, np.broadcast_to(g / count, in_shape).copy())

    return _make(out_data, (a,), backward)


# ---------------------------------------------------------------------------
# fused neural-net primitives (numerically stable, with analytic backwards)


def softmax(a, axis=-1):
    """Stable softmax: the running max is subtracted before exponentiation."""
    a = astensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        _accumulate(a, y * (g - dot))

    return _make(y, (a,), backward)


def log_softmax(a, axis=-1):
    a = astensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out_data = shifted - lse

    def backward(g):
        soft = np.exp(out_data)
        _accumulate(a, g - soft * g.sum(axis=axis, keepdims=True))

    return _make(out_data, (a,), backward)


def layer_norm(a, gain, bias, eps=1e-5):
    """Normalize the last axis to zero mean, unit variance, then scale/shift.

    A constant row normalizes to zeros (variance 0 is guarded by eps).
    """
    a, gain, bias = astensor(a), astensor(gain), astensor(bias)
    mu = a.data.mean(axis=-1, keepdims=True)
    centered = a.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    out_data = gain.data * xhat + bias.data

    def backward(g):
        if a.requires_grad:
            gx = g * gain.data
            m1 = gx.mean(axis=-1, keepdims=True)
            m2 = (gx * xhat).mean(axis=-1, keepdims=True)
            _accumulate(a, inv_std * (gx - m1 - xhat * m2))
        if gain.requires_grad:
            red = tuple(range(g.ndim - 1))
            _accumulate(gain, (g * xhat).sum(axis=red))
        if bias.requires_grad:
            red = tuple(range(g.ndim - 1))
            _accumulate(bias, g.sum(axis=red))

    return _make(out_data, (a, gain, bias), backward)


def dropout(a, rate, rng=None):
    """Inverted dropout. rate == 0 is an exact no-op (the default everywhere)."""
    a = astensor(a)
    if rate == 0.0:
        return a
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if rng is None:
        raise ValueError("dropout with rate > 0 needs an explicit rng")
    scale = 1.0 / (1.0 - rate)
    mask = (rng.random(a.data.shape) >= rate) * scale

    def backward(g):
        _accumulate(a, g * mask)

    return _make(a.data * mask, (a,), backward)
