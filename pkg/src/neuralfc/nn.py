"""Dense ReLU networks with hand-written reverse-mode gradients, plus Adam.

Parameters of a network live in one flat array; layer weights and biases
are views into it. That keeps the optimizer, gradient clipping and
checksumming trivial. Weights are ``(out, in)`` row-major, matching the
on-disk model format.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

POLICY_DIMS = (15, 64, 32, 4)
CRITIC_DIMS = (15, 64, 32, 1)


def param_count(dims) -> int:
    return sum(i * o + o for i, o in zip(dims[:-1], dims[1:]))


class MLP:
    """Affine -> ReLU for every hidden layer, final layer affine.

    Args:
        dims: layer widths including input and output.
        params: optional flat buffer to view into (length ``param_count``).
        dtype: numeric type when ``params`` is not given.
    """

    def __init__(self, dims, params=None, dtype=np.float32):
        self.dims = tuple(int(d) for d in dims)
        n = param_count(self.dims)
        if params is None:
            params = np.zeros(n, dtype=dtype)
        if params.shape != (n,):
            raise ValueError(f"expected {n} parameters, got shape {params.shape}")
        self.params = params
        self.weights = []
        self.biases = []
        off = 0
        for i, o in zip(self.dims[:-1], self.dims[1:]):
            self.weights.append(params[off : off + i * o].reshape(o, i))
            off += i * o
            self.biases.append(params[off : off + o])
            off += o

    @property
    def dtype(self):
        return self.params.dtype

    @property
    def num_layers(self) -> int:
        return len(self.weights)

    def init(self, rng: np.random.Generator, last_layer_scale: float = 1.0) -> "MLP":
        """Uniform(+-1/sqrt(fan_in)) init; the last layer optionally scaled down."""
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            bound = 1.0 / np.sqrt(w.shape[1])
            scale = last_layer_scale if k == self.num_layers - 1 else 1.0
            w[...] = rng.uniform(-bound, bound, w.shape) * scale
            b[...] = rng.uniform(-bound, bound, b.shape) * scale
        return self

    def copy(self) -> "MLP":
        return MLP(self.dims, self.params.copy())


@dataclass
class ForwardCache:
    inputs: list  # input to each layer
    pre: list  # pre-activations of each layer


def mlp_forward(net: MLP, x):
    """Forward pass for a vector ``(in,)`` or batch ``(B, in)``.

    Returns:
        (output, cache) where ``cache`` feeds :func:`mlp_backward`.
    """
    x = np.asarray(x)
    if x.shape[-1] != net.dims[0]:
        raise ValueError(f"input dim {x.shape[-1]} != network input dim {net.dims[0]}")
    h = x
    inputs, pre = [], []
    last = net.num_layers - 1
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        inputs.append(h)
        z = h @ w.T + b
        pre.append(z)
        h = z if k == last else np.maximum(z, 0)
    return h, ForwardCache(inputs, pre)


def mlp_backward(net: MLP, cache: ForwardCache, grad_output):
    """Reverse-mode gradients of the forward map.

    Batched caches sum parameter gradients over the batch.

    Returns:
        (flat parameter gradient shaped like ``net.params``, grad wrt input)
    """
    grad = np.zeros_like(net.params)
    view = MLP(net.dims, grad)
    g = np.asarray(grad_output)
    for k in range(net.num_layers - 1, -1, -1):
        if k != net.num_layers - 1:
            g = g * (cache.pre[k] > 0)
        x = cache.inputs[k]
        if g.ndim == 1:
            view.weights[k][...] = np.outer(g, x)
            view.biases[k][...] = g
        else:
            view.weights[k][...] = g.T @ x
            view.biases[k][...] = g.sum(axis=0)
        g = g @ net.weights[k]
    return grad, g


class Adam:
    """Bias-corrected Adam over one flat parameter array (updated in place)."""

    def __init__(self, size: int, lr: float = 3e-4, beta1=0.9, beta2=0.999, eps=1e-8, dtype=np.float32):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(size, dtype=dtype)
        self.v = np.zeros(size, dtype=dtype)
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        adam_step(params, grads, self.m, self.v, self.t, self.lr, self.beta1, self.beta2, self.eps)


def adam_step(params, grads, m, v, t: int, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
    """In-place Adam update of ``params``, ``m`` and ``v``; returns them."""
    if t < 1:
        raise ValueError("t must be >= 1")
    m *= beta1
    m += (1 - beta1) * grads
    v *= beta2
    v += (1 - beta2) * np.square(grads)
    m_hat = m / (1 - beta1**t)
    v_hat = v / (1 - beta2**t)
    params -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(params.dtype, copy=False)
    return params, m, v
