"""Small neural-net building blocks on top of the autodiff Tensor.

Modules hold their parameters as Tensors with requires_grad=True and expose
them through named_parameters(prefix) so a model can register everything in
one flat ParameterStore.
"""

import math

import numpy as np

from .tensor import Tensor, concat, gather_rows, layer_norm, matmul, pad2d, relu, reshape, softmax, transpose


class Linear:
    def __init__(self, n_in, n_out, rng, zero_init=False, bias=True):
        if zero_init:
            w = np.zeros((n_in, n_out))
        else:
            limit = math.sqrt(6.0 / (n_in + n_out))
            w = rng.uniform(-limit, limit, size=(n_in, n_out))
        self.w = Tensor(w, requires_grad=True)
        self.b = Tensor(np.zeros(n_out), requires_grad=True) if bias else None

    def __call__(self, x):
        y = matmul(x, self.w)
        return y + self.b if self.b is not None else y

    def named_parameters(self, prefix):
        yield f"{prefix}.w", self.w
        if self.b is not None:
            yield f"{prefix}.b", self.b


class LayerNorm:
    def __init__(self, dim, eps=1e-5):
        self.gain = Tensor(np.ones(dim), requires_grad=True)
        self.bias = Tensor(np.zeros(dim), requires_grad=True)
        self.eps = eps

    def __call__(self, x):
        return layer_norm(x, self.gain, self.bias, eps=self.eps)

    def named_parameters(self, prefix):
        yield f"{prefix}.gain", self.gain
        yield f"{prefix}.bias", self.bias


class MLP:
    """Affine-ReLU stack; the final layer is affine only.

    dims lists every width including input and output, so dims=(8, 16, 3)
    is one hidden layer of 16 units.
    """

    def __init__(self, dims, rng, zero_init_last=False, last_bias=None):
        if len(dims) < 2:
            raise ValueError("MLP needs at least an input and an output width")
        self.layers = []
        for i in range(len(dims) - 1):
            last = i == len(dims) - 2
            self.layers.append(Linear(dims[i], dims[i + 1], rng, zero_init=zero_init_last and last))
        if last_bias is not None:
            self.layers[-1].b.data[:] = np.asarray(last_bias, dtype=np.float64)

    def __call__(self, x):
        weights = [(layer.w, layer.b) for layer in self.layers]
        return mlp_forward(x, weights)

    def named_parameters(self, prefix):
        for i, layer in enumerate(self.layers):
            yield from layer.named_parameters(f"{prefix}.{i}")


def mlp_forward(x, layers):
    """Run an affine-ReLU chain given [(w, b), ...]; final layer affine only."""
    for i, (w, b) in enumerate(layers):
        x = matmul(x, w) + b
        if i < len(layers) - 1:
            x = relu(x)
    return x


class Conv2d:
    """Strided 2-D convolution on a [H, W, C_in] tensor, as im2col + matmul.

    The weight rows are ordered (ky, kx, c_in), matching the flattening of the
    gathered patches; columns are output channels. Padding is zero-fill and
    the output height is (H + 2·padding - kernel) // stride + 1.
    """

    def __init__(self, in_channels, out_channels, rng, kernel=3, stride=1, padding=1):
        if kernel < 1 or stride < 1 or padding < 0:
            raise ValueError("kernel and stride must be >= 1 and padding >= 0")
        fan_in = kernel * kernel * in_channels
        limit = math.sqrt(6.0 / (fan_in + out_channels))
        self.w = Tensor(rng.uniform(-limit, limit, size=(fan_in, out_channels)), requires_grad=True)
        self.b = Tensor(np.zeros(out_channels), requires_grad=True)
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.stride = stride
        self.padding = padding

    def __call__(self, x):
        h, w, c = x.shape
        if c != self.in_channels:
            raise ValueError(f"expected {self.in_channels} input channels, got {c}")
        k, s, p = self.kernel, self.stride, self.padding
        h_out = (h + 2 * p - k) // s + 1
        w_out = (w + 2 * p - k) // s + 1
        if h_out < 1 or w_out < 1:
            raise ValueError(f"input {h}x{w} too small for kernel {k} stride {s}")
        padded = pad2d(x, p) if p else x
        w_pad = w + 2 * p
        rows = np.arange(h_out)[:, None, None, None] * s + np.arange(k)[None, None, :, None]
        cols = np.arange(w_out)[None, :, None, None] * s + np.arange(k)[None, None, None, :]
        idx = (rows * w_pad + cols).reshape(-1)
        flat = reshape(padded, (-1, c))
        patches = reshape(gather_rows(flat, idx), (h_out * w_out, k * k * c))
        out = matmul(patches, self.w) + self.b
        return reshape(out, (h_out, w_out, self.out_channels))

    def named_parameters(self, prefix):
        yield f"{prefix}.w", self.w
        yield f"{prefix}.b", self.b


class MultiHeadAttention:
    """Scaled dot-product attention with per-head splits of width C/heads.

    Returns both the output and the attention weights [heads, Q, S]; each
    weight row is a softmax, hence row-stochastic. With a single key the
    output is the value path of that key alone, independent of the query.
    """

    def __init__(self, channels, heads, rng):
        if channels % heads != 0:
            raise ValueError(f"heads ({heads}) must divide channels ({channels})")
        self.channels = channels
        self.heads = heads
        self.head_dim = channels // heads
        self.scale = 1.0 / math.sqrt(self.head_dim)
        self.wq = Linear(channels, channels, rng)
        # No key bias: it would shift every logit of a query's softmax row
        # equally, so it is unidentifiable and its true gradient is zero.
        self.wk = Linear(channels, channels, rng, bias=False)
        self.wv = Linear(channels, channels, rng)
        self.wo = Linear(channels, channels, rng)

    def _split(self, x, length):
        # [S, C] -> [heads, S, head_dim]
        return transpose(reshape(x, (length, self.heads, self.head_dim)), (1, 0, 2))

    def project_kv(self, memory):
        """Precompute per-head key/value projections of a fixed memory.

        The recurrent decoder attends to the same memory every iteration, so
        projecting it once and reusing the nodes lets backward accumulate
        across iterations without recomputation.
        """
        s = memory.shape[0]
        return self._split(self.wk(memory), s), self._split(self.wv(memory), s)

    def __call__(self, query, key=None, value=None, kv=None):
        q_len = query.shape[0]
        qh = self._split(self.wq(query), q_len)
        if kv is None:
            if key is None:
                raise ValueError("attention needs either key/value tensors or a kv cache")
            if value is None:
                value = key
            kh = self._split(self.wk(key), key.shape[0])
            vh = self._split(self.wv(value), value.shape[0])
        else:
            kh, vh = kv
        scores = matmul(qh, transpose(kh, (0, 2, 1))) * self.scale
        weights = softmax(scores, axis=-1)
        ctx = matmul(weights, vh)
        merged = reshape(transpose(ctx, (1, 0, 2)), (q_len, self.channels))
        return self.wo(merged), weights

    def named_parameters(self, prefix):
        yield from self.wq.named_parameters(f"{prefix}.q")
        yield from self.wk.named_parameters(f"{prefix}.k")
        yield from self.wv.named_parameters(f"{prefix}.v")
        yield from self.wo.named_parameters(f"{prefix}.o")


def multi_head_attention(query, key, value, attention):
    """Functional form: attend query over (key, value) with a given module."""
    return attention(query, key, value)


__all__ = [
    "Linear",
    "LayerNorm",
    "MLP",
    "mlp_forward",
    "MultiHeadAttention",
    "multi_head_attention",
    "Conv2d",
    "concat",
]
