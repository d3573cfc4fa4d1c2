"""Minimal self-contained neural-network kernel on numpy arrays.

Forward and backward passes for 1D convolution, batch normalization,
ReLU, max pooling, dense, dropout and sigmoid, a class-weighted binary
cross-entropy loss, and Adam.  Every backward pass is the analytic
adjoint of its forward and is validated against central finite
differences in the test suite.

Layers carry a ``dtype`` (float32 by default for training speed; the
gradient-check tests run everything in float64).  A layer instance is
single-writer during training: forward, backward and the optimizer step
are not reentrant.  Eval-mode inference over frozen parameters is safe
from many threads.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateBatch, ShapeMismatch

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


def sigmoid(z: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function, strictly inside (0, 1)."""
    z = np.asarray(z)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    one = z.dtype.type(1.0)
    zero = z.dtype.type(0.0)
    return np.clip(out, np.nextafter(zero, one), np.nextafter(one, zero))


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


class Layer:
    """Base layer: parameters, their gradients, and persistent state."""

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def params(self) -> dict[str, np.ndarray]:
        return {}

    def grads(self) -> dict[str, np.ndarray]:
        return {}

    def state(self) -> dict[str, np.ndarray]:
        """Persistent non-trained state (e.g. BN running statistics)."""
        return {}

    def children(self) -> list[tuple[str, "Layer"]]:
        return []


def _im2col(xp: np.ndarray, k: int, stride: int, l_out: int) -> np.ndarray:
    """Unfold padded input [b, c, lp] into columns [b, c*k, l_out]."""
    b, c, _ = xp.shape
    cols = np.empty((b, c, k, l_out), dtype=xp.dtype)
    for j in range(k):
        cols[:, :, j, :] = xp[:, :, j : j + stride * l_out : stride]
    return cols.reshape(b, c * k, l_out)


class Conv1d(Layer):
    """Cross-correlation (no kernel flip) over [batch, channels, length]."""

    def __init__(self, c_in: int, c_out: int, kernel_size: int, stride: int = 1,
                 padding: int = 0, dtype=np.float32):
        if stride < 1:
            raise ShapeMismatch(f"stride must be >= 1, got {stride}")
        self.c_in = c_in
        self.c_out = c_out
        self.k = kernel_size
        self.stride = stride
        self.padding = padding
        self.w = np.zeros((c_out, c_in, kernel_size), dtype=dtype)
        self.b = np.zeros(c_out, dtype=dtype)
        self.gw = np.zeros_like(self.w)
        self.gb = np.zeros_like(self.b)
        self._xp: np.ndarray | None = None

    def params(self):
        return {"w": self.w, "b": self.b}

    def grads(self):
        return {"w": self.gw, "b": self.gb}

    def out_len(self, length: int) -> int:
        padded = length + 2 * self.padding
        if padded < self.k:
            raise ShapeMismatch(
                f"input length {length} + 2*{self.padding} padding < kernel {self.k}"
            )
        return (padded - self.k) // self.stride + 1

    def forward(self, x, train):
        if x.ndim != 3 or x.shape[1] != self.c_in:
            raise ShapeMismatch(
                f"expected [batch, {self.c_in}, len] input, got {x.shape}"
            )
        l_out = self.out_len(x.shape[2])
        xp = np.pad(x, ((0, 0), (0, 0), (self.padding, self.padding))) if self.padding else x
        cols = _im2col(xp, self.k, self.stride, l_out)
        y = np.matmul(self.w.reshape(self.c_out, -1), cols)
        y += self.b[None, :, None]
        self._xp = xp
        return y

    def backward(self, grad_out):
        xp = self._xp
        b, _, lp = xp.shape
        l_out = grad_out.shape[2]
        self.gb += grad_out.sum(axis=(0, 2))
        cols = _im2col(xp, self.k, self.stride, l_out)
        gw_flat = np.matmul(grad_out, cols.transpose(0, 2, 1)).sum(axis=0)
        self.gw += gw_flat.reshape(self.w.shape)

        grad_cols = np.matmul(self.w.reshape(self.c_out, -1).T, grad_out)
        grad_cols = grad_cols.reshape(b, self.c_in, self.k, l_out)
        grad_xp = np.zeros((b, self.c_in, lp), dtype=grad_out.dtype)
        for j in range(self.k):
            grad_xp[:, :, j : j + self.stride * l_out : self.stride] += grad_cols[:, :, j, :]
        if self.padding:
            return grad_xp[:, :, self.padding : lp - self.padding]
        return grad_xp


class BatchNorm1d(Layer):
    """Per-channel normalization over (batch, length) with running stats.

    Training mode normalizes with batch statistics (biased variance) and
    updates the running estimates with momentum; eval mode uses the
    running estimates.  The backward pass differentiates through the
    batch statistics (full BN backward).
    """

    def __init__(self, channels: int, momentum: float = BN_MOMENTUM,
                 eps: float = BN_EPS, dtype=np.float32):
        self.channels = channels
        self.momentum = momentum
        self.eps = eps
        self.gamma = np.ones(channels, dtype=dtype)
        self.beta = np.zeros(channels, dtype=dtype)
        self.ggamma = np.zeros_like(self.gamma)
        self.gbeta = np.zeros_like(self.beta)
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self._xhat: np.ndarray | None = None
        self._inv_std: np.ndarray | None = None
        self._train_mode = True

    def params(self):
        return {"gamma": self.gamma, "beta": self.beta}

    def grads(self):
        return {"gamma": self.ggamma, "beta": self.gbeta}

    def state(self):
        return {"running_mean": self.running_mean, "running_var": self.running_var}

    def forward(self, x, train):
        if x.ndim != 3 or x.shape[1] != self.channels:
            raise ShapeMismatch(f"expected [batch, {self.channels}, len], got {x.shape}")
        self._train_mode = train
        if train:
            m = x.shape[0] * x.shape[2]
            if m < 2:
                raise DegenerateBatch(f"batch x len = {m} < 2 in train mode")
            mean = x.mean(axis=(0, 2))
            var = x.var(axis=(0, 2))
            self.running_mean += self.momentum * (mean - self.running_mean)
            self.running_var += self.momentum * (var - self.running_var)
        else:
            mean = self.running_mean
            var = self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean[None, :, None]) * inv_std[None, :, None]
        self._xhat = xhat
        self._inv_std = inv_std.astype(x.dtype)
        return self.gamma[None, :, None] * xhat + self.beta[None, :, None]

    def backward(self, grad_out):
        xhat = self._xhat
        inv_std = self._inv_std
        self.ggamma += (grad_out * xhat).sum(axis=(0, 2))
        self.gbeta += grad_out.sum(axis=(0, 2))
        dxhat = grad_out * self.gamma[None, :, None]
        if not self._train_mode:
            return dxhat * inv_std[None, :, None]
        m = grad_out.shape[0] * grad_out.shape[2]
        sum_dxhat = dxhat.sum(axis=(0, 2), keepdims=True)
        sum_dxhat_xhat = (dxhat * xhat).sum(axis=(0, 2), keepdims=True)
        return (inv_std[None, :, None] / m) * (m * dxhat - sum_dxhat - xhat * sum_dxhat_xhat)


class ReLU(Layer):
    def __init__(self):
        self._mask: np.ndarray | None = None

    def forward(self, x, train):
        self._mask = x > 0
        return x * self._mask

    def backward(self, grad_out):
        return grad_out * self._mask


class MaxPool1d(Layer):
    """Max pooling over the last axis; gradient routes to the earliest argmax."""

    def __init__(self, pool_size: int, stride: int | None = None):
        if pool_size < 1:
            raise ShapeMismatch(f"pool_size must be >= 1, got {pool_size}")
        self.pool = pool_size
        self.stride = pool_size if stride is None else stride
        self._arg: np.ndarray | None = None
        self._in_len = 0

    def out_len(self, length: int) -> int:
        if length < self.pool:
            raise ShapeMismatch(f"input length {length} < pool size {self.pool}")
        return (length - self.pool) // self.stride + 1

    def forward(self, x, train):
        if x.ndim != 3:
            raise ShapeMismatch(f"expected 3-d input, got shape {x.shape}")
        l_out = self.out_len(x.shape[2])
        windows = np.stack(
            [x[:, :, j : j + self.stride * l_out : self.stride] for j in range(self.pool)],
            axis=-1,
        )
        self._arg = windows.argmax(axis=-1)
        self._in_len = x.shape[2]
        return windows.max(axis=-1)

    def backward(self, grad_out):
        b, c, l_out = grad_out.shape
        grad_in = np.zeros((b, c, self._in_len), dtype=grad_out.dtype)
        for j in range(self.pool):
            view = grad_in[:, :, j : j + self.stride * l_out : self.stride]
            mask = self._arg == j
            view[mask] += grad_out[mask]
        return grad_in


class Dense(Layer):
    def __init__(self, n_in: int, n_out: int, dtype=np.float32):
        self.n_in = n_in
        self.n_out = n_out
        self.w = np.zeros((n_out, n_in), dtype=dtype)
        self.b = np.zeros(n_out, dtype=dtype)
        self.gw = np.zeros_like(self.w)
        self.gb = np.zeros_like(self.b)
        self._x: np.ndarray | None = None

    def params(self):
        return {"w": self.w, "b": self.b}

    def grads(self):
        return {"w": self.gw, "b": self.gb}

    def forward(self, x, train):
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise ShapeMismatch(f"expected [batch, {self.n_in}] input, got {x.shape}")
        self._x = x
        return x @ self.w.T + self.b

    def backward(self, grad_out):
        self.gw += grad_out.T @ self._x
        self.gb += grad_out.sum(axis=0)
        return grad_out @ self.w


class Flatten(Layer):
    def __init__(self):
        self._shape: tuple | None = None

    def forward(self, x, train):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad_out):
        return grad_out.reshape(self._shape)


class Dropout(Layer):
    """Inverted dropout: eval mode is an exact identity."""

    def __init__(self, p: float, rng: np.random.Generator):
        if not 0.0 <= p < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {p}")
        self.p = p
        self.rng = rng
        self._scaled_mask: np.ndarray | None = None

    def forward(self, x, train):
        if not train or self.p == 0.0:
            self._scaled_mask = None
            return x
        keep = self.rng.random(x.shape) >= self.p
        self._scaled_mask = keep.astype(x.dtype) / (1.0 - self.p)
        return x * self._scaled_mask

    def backward(self, grad_out):
        if self._scaled_mask is None:
            return grad_out
        return grad_out * self._scaled_mask


class Sigmoid(Layer):
    def __init__(self):
        self._y: np.ndarray | None = None

    def forward(self, x, train):
        self._y = sigmoid(x)
        return self._y

    def backward(self, grad_out):
        return grad_out * self._y * (1.0 - self._y)


class ResidualBlock(Layer):
    """conv-BN-ReLU-conv-BN main path, max-pooled shortcut, add, ReLU.

    Convolutions use same padding so pooling alone sets the output length;
    a 1x1 convolution adapts the shortcut when channel counts differ.
    """

    def __init__(self, c_in: int, c_out: int, kernel_size: int, pool_size: int,
                 dtype=np.float32):
        pad = kernel_size // 2
        self.conv1 = Conv1d(c_in, c_out, kernel_size, padding=pad, dtype=dtype)
        self.bn1 = BatchNorm1d(c_out, dtype=dtype)
        self.relu1 = ReLU()
        self.conv2 = Conv1d(c_out, c_out, kernel_size, padding=pad, dtype=dtype)
        self.bn2 = BatchNorm1d(c_out, dtype=dtype)
        self.pool_main = MaxPool1d(pool_size)
        self.pool_short = MaxPool1d(pool_size)
        self.conv_short = Conv1d(c_in, c_out, 1, dtype=dtype) if c_in != c_out else None
        self.relu_out = ReLU()

    def children(self):
        named = [
            ("conv1", self.conv1),
            ("bn1", self.bn1),
            ("conv2", self.conv2),
            ("bn2", self.bn2),
        ]
        if self.conv_short is not None:
            named.append(("conv_short", self.conv_short))
        return named

    def forward(self, x, train):
        h = self.conv1.forward(x, train)
        h = self.bn1.forward(h, train)
        h = self.relu1.forward(h, train)
        h = self.conv2.forward(h, train)
        h = self.bn2.forward(h, train)
        h = self.pool_main.forward(h, train)
        s = self.pool_short.forward(x, train)
        if self.conv_short is not None:
            s = self.conv_short.forward(s, train)
        return self.relu_out.forward(h + s, train)

    def backward(self, grad_out):
        g = self.relu_out.backward(grad_out)
        gh = self.pool_main.backward(g)
        gh = self.bn2.backward(gh)
        gh = self.conv2.backward(gh)
        gh = self.relu1.backward(gh)
        gh = self.bn1.backward(gh)
        gx = self.conv1.backward(gh)
        gs = g
        if self.conv_short is not None:
            gs = self.conv_short.backward(gs)
        gx += self.pool_short.backward(gs)
        return gx


def weighted_bce(probs: np.ndarray, targets: np.ndarray, pos_weight: float = 1.0,
                 ) -> tuple[float, np.ndarray]:
    """Class-weighted binary cross-entropy and its gradient w.r.t. logits.

    loss = -mean(pos_weight * y * log p + (1 - y) * log(1 - p)), evaluated
    through the logit z = log(p / (1 - p)) and softplus so saturated
    probabilities stay finite.  The returned gradient is d loss / d z.
    """
    if pos_weight <= 0:
        raise ValueError(f"pos_weight must be > 0, got {pos_weight}")
    p = np.asarray(probs, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if p.shape != y.shape:
        raise ShapeMismatch(f"probs shape {p.shape} != targets shape {y.shape}")
    p = np.clip(p, 1e-12, 1.0 - 1e-12)
    z = np.log(p) - np.log1p(-p)
    softplus_neg = np.log1p(np.exp(-np.abs(z))) + np.maximum(-z, 0.0)  # softplus(-z)
    softplus_pos = np.log1p(np.exp(-np.abs(z))) + np.maximum(z, 0.0)  # softplus(z)
    loss = float(np.mean(pos_weight * y * softplus_neg + (1.0 - y) * softplus_pos))
    grad_logits = (pos_weight * y * (p - 1.0) + (1.0 - y) * p) / p.size
    return loss, grad_logits


def adam_step(param: np.ndarray, grad: np.ndarray, m: np.ndarray, v: np.ndarray,
              t: int, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> None:
    """One Adam update with bias correction, in place (t is 1-based)."""
    if not (param.shape == grad.shape == m.shape == v.shape):
        raise ShapeMismatch(
            f"shapes disagree: param {param.shape}, grad {grad.shape}, "
            f"m {m.shape}, v {v.shape}"
        )
    m += (1.0 - beta1) * (grad - m)
    v += (1.0 - beta2) * (grad * grad - v)
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    param -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(param.dtype)


class Adam:
    """Adam state over a named-parameter mapping."""

    def __init__(self, named_params: dict[str, np.ndarray], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p, dtype=np.float64) for k, p in named_params.items()}
        self.v = {k: np.zeros_like(p, dtype=np.float64) for k, p in named_params.items()}

    def step(self, named_params: dict[str, np.ndarray], named_grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        for name, param in named_params.items():
            adam_step(param, named_grads[name].astype(np.float64), self.m[name],
                      self.v[name], self.t, self.lr, self.beta1, self.beta2, self.eps)
