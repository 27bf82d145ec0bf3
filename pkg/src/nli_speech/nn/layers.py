"""Layers with exact analytic gradients, numpy only.

Every layer caches what its backward pass needs during forward, accumulates
parameter gradients into .grads, and returns the gradient with respect to its
input. Shapes are batch-first throughout.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatchError


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Layer:
    """Base layer: no parameters, identity bookkeeping."""

    def __init__(self):
        self.params = []
        self.grads = []

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def zero_grads(self) -> None:
        for g in self.grads:
            g[...] = 0.0

    def n_params(self) -> int:
        return sum(p.size for p in self.params)


class Dense(Layer):
    """Affine map x @ W.T + b with W of shape (out, in)."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        super().__init__()
        self.n_in, self.n_out = n_in, n_out
        self.W = glorot_uniform(rng, (n_out, n_in), n_in, n_out)
        self.b = np.zeros(n_out)
        self.params = [self.W, self.b]
        self.grads = [np.zeros_like(self.W), np.zeros_like(self.b)]

    def forward(self, x, training=False):
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise ShapeMismatchError(
                f"dense: expected input (batch, {self.n_in}), got {x.shape}"
            )
        self._x = x
        return x @ self.W.T + self.b

    def backward(self, grad):
        self.grads[0] += grad.T @ self._x
        self.grads[1] += grad.sum(axis=0)
        return grad @ self.W


class ReLU(Layer):
    def forward(self, x, training=False):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, grad):
        return grad * self._mask


class Softmax(Layer):
    """Row-wise softmax over the last axis."""

    def forward(self, x, training=False):
        z = x - x.max(axis=-1, keepdims=True)
        e = np.exp(z)
        self._s = e / e.sum(axis=-1, keepdims=True)
        return self._s

    def backward(self, grad):
        s = self._s
        return s * (grad - (grad * s).sum(axis=-1, keepdims=True))


class Flatten(Layer):
    def forward(self, x, training=False):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._shape)


class Reshape(Layer):
    """Reshape the per-sample trailing dimensions (batch axis untouched)."""

    def __init__(self, target_shape):
        super().__init__()
        self.target_shape = tuple(target_shape)

    def forward(self, x, training=False):
        self._shape = x.shape
        return x.reshape((x.shape[0],) + self.target_shape)

    def backward(self, grad):
        return grad.reshape(self._shape)


class Dropout(Layer):
    """Inverted-scaling dropout; identity when not training."""

    def __init__(self, rate: float):
        super().__init__()
        if not 0 <= rate < 1:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self.rng = np.random.default_rng(0)

    def forward(self, x, training=False):
        if not training or self.rate == 0.0:
            self._mask = None
            return x
        self._mask = (self.rng.random(x.shape) >= self.rate) / (1.0 - self.rate)
        return x * self._mask

    def backward(self, grad):
        return grad if self._mask is None else grad * self._mask


class Conv2D(Layer):
    """2-D convolution, stride 1, same padding; NHWC layout.

    kernels have shape (n_kernels, kh, kw, in_channels).
    """

    def __init__(self, in_channels: int, n_kernels: int, kernel_size: int,
                 rng: np.random.Generator):
        super().__init__()
        kh = kw = kernel_size
        self.in_channels = in_channels
        self.n_kernels = n_kernels
        self.kh, self.kw = kh, kw
        fan_in = kh * kw * in_channels
        fan_out = kh * kw * n_kernels
        self.K = glorot_uniform(rng, (n_kernels, kh, kw, in_channels), fan_in, fan_out)
        self.b = np.zeros(n_kernels)
        self.params = [self.K, self.b]
        self.grads = [np.zeros_like(self.K), np.zeros_like(self.b)]

    def _pad(self, x):
        pt, pl = (self.kh - 1) // 2, (self.kw - 1) // 2
        pb, pr = self.kh - 1 - pt, self.kw - 1 - pl
        return np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0))), (pt, pb, pl, pr)

    def forward(self, x, training=False):
        if x.ndim != 4 or x.shape[3] != self.in_channels:
            raise ShapeMismatchError(
                f"conv2d: expected input (batch, h, w, {self.in_channels}), got {x.shape}"
            )
        xp, self._padding = self._pad(x)
        self._xp = xp
        b_, h, w, _ = x.shape
        out = np.tile(self.b, (b_, h, w, 1))
        for di in range(self.kh):
            for dj in range(self.kw):
                out += xp[:, di : di + h, dj : dj + w, :] @ self.K[:, di, dj, :].T
        return out

    def backward(self, grad):
        xp = self._xp
        b_, h, w, _ = grad.shape
        dxp = np.zeros_like(xp)
        for di in range(self.kh):
            for dj in range(self.kw):
                patch = xp[:, di : di + h, dj : dj + w, :]
                self.grads[0][:, di, dj, :] += np.tensordot(grad, patch, axes=([0, 1, 2], [0, 1, 2]))
                dxp[:, di : di + h, dj : dj + w, :] += grad @ self.K[:, di, dj, :]
        self.grads[1] += grad.sum(axis=(0, 1, 2))
        pt, pb, pl, pr = self._padding
        return dxp[:, pt : xp.shape[1] - pb, pl : xp.shape[2] - pr, :]


class MaxPool2D(Layer):
    """2x2 max pooling with stride 2; trailing odd rows/columns are dropped."""

    def __init__(self, size: int = 2):
        super().__init__()
        self.size = size

    def forward(self, x, training=False):
        s = self.size
        b, h, w, c = x.shape
        ho, wo = h // s, w // s
        if ho == 0 or wo == 0:
            raise ShapeMismatchError(f"maxpool: input {x.shape} smaller than pool size {s}")
        crop = x[:, : ho * s, : wo * s, :]
        windows = crop.reshape(b, ho, s, wo, s, c).transpose(0, 1, 3, 5, 2, 4)
        flat = windows.reshape(b, ho, wo, c, s * s)
        self._argmax = flat.argmax(axis=-1)
        self._in_shape = x.shape
        return flat.max(axis=-1)

    def backward(self, grad):
        s = self.size
        b, ho, wo, c = grad.shape
        dx = np.zeros(self._in_shape)
        bi, hi, wi, ci = np.ogrid[:b, :ho, :wo, :c]
        rows = hi * s + self._argmax // s
        cols = wi * s + self._argmax % s
        # Windows are disjoint, so target positions are unique.
        dx[bi, rows, cols, ci] = grad
        return dx


class LSTM(Layer):
    """Single LSTM layer over (batch, time, features); gate order i, f, g, o.

    Emits the last hidden state (batch, hidden) by default, or the full
    hidden sequence (batch, time, hidden) with return_sequences=True. The
    forget-gate bias slice starts at 1.0.
    """

    def __init__(self, n_in: int, n_hidden: int, rng: np.random.Generator,
                 return_sequences: bool = False):
        super().__init__()
        self.n_in, self.n_hidden = n_in, n_hidden
        self.return_sequences = return_sequences
        h = n_hidden
        self.Wx = glorot_uniform(rng, (4 * h, n_in), n_in, 4 * h)
        self.Wh = glorot_uniform(rng, (4 * h, h), h, 4 * h)
        self.b = np.zeros(4 * h)
        self.b[h : 2 * h] = 1.0
        self.params = [self.Wx, self.Wh, self.b]
        self.grads = [np.zeros_like(self.Wx), np.zeros_like(self.Wh), np.zeros_like(self.b)]

    def forward(self, x, training=False):
        if x.ndim != 3 or x.shape[2] != self.n_in:
            raise ShapeMismatchError(
                f"lstm: expected input (batch, time, {self.n_in}), got {x.shape}"
            )
        b, t, _ = x.shape
        h = self.n_hidden
        self._x = x
        self._i = np.zeros((t, b, h))
        self._f = np.zeros((t, b, h))
        self._g = np.zeros((t, b, h))
        self._o = np.zeros((t, b, h))
        self._c = np.zeros((t, b, h))
        self._tc = np.zeros((t, b, h))
        self._h = np.zeros((t, b, h))
        h_prev = np.zeros((b, h))
        c_prev = np.zeros((b, h))
        for k in range(t):
            z = x[:, k, :] @ self.Wx.T + h_prev @ self.Wh.T + self.b
            i = _sigmoid(z[:, :h])
            f = _sigmoid(z[:, h : 2 * h])
            g = np.tanh(z[:, 2 * h : 3 * h])
            o = _sigmoid(z[:, 3 * h :])
            c = f * c_prev + i * g
            tc = np.tanh(c)
            h_prev = o * tc
            self._i[k], self._f[k], self._g[k], self._o[k] = i, f, g, o
            self._c[k], self._tc[k], self._h[k] = c, tc, h_prev
            c_prev = c
        if self.return_sequences:
            return self._h.transpose(1, 0, 2)
        return self._h[-1]

    def backward(self, grad):
        x = self._x
        b, t, _ = x.shape
        h = self.n_hidden
        if self.return_sequences:
            dh_seq = grad.transpose(1, 0, 2)
        else:
            dh_seq = np.zeros((t, b, h))
            dh_seq[-1] = grad
        dx = np.zeros_like(x)
        dh_next = np.zeros((b, h))
        dc_next = np.zeros((b, h))
        for k in range(t - 1, -1, -1):
            dh = dh_seq[k] + dh_next
            i, f, g, o = self._i[k], self._f[k], self._g[k], self._o[k]
            c, tc = self._c[k], self._tc[k]
            c_prev = self._c[k - 1] if k > 0 else np.zeros((b, h))
            do = dh * tc
            dc = dc_next + dh * o * (1.0 - tc * tc)
            di = dc * g
            df = dc * c_prev
            dg = dc * i
            dz = np.concatenate(
                [
                    di * i * (1.0 - i),
                    df * f * (1.0 - f),
                    dg * (1.0 - g * g),
                    do * o * (1.0 - o),
                ],
                axis=1,
            )
            h_prev = self._h[k - 1] if k > 0 else np.zeros((b, h))
            self.grads[0] += dz.T @ x[:, k, :]
            self.grads[1] += dz.T @ h_prev
            self.grads[2] += dz.sum(axis=0)
            dx[:, k, :] = dz @ self.Wx
            dh_next = dz @ self.Wh
            dc_next = dc * f
        return dx


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class Network:
    """A sequential stack of layers producing class logits."""

    def __init__(self, layers):
        self.layers = list(layers)
        self.rng = np.random.default_rng(0)

    def set_rng(self, rng: np.random.Generator) -> None:
        """Install the generator that drives dropout masks."""
        self.rng = rng
        for layer in self.layers:
            if isinstance(layer, Dropout):
                layer.rng = rng

    def forward(self, x, training: bool = False) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x, training=training)
        return x

    def backward(self, grad) -> np.ndarray:
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def parameters(self) -> list:
        return [p for layer in self.layers for p in layer.params]

    def gradients(self) -> list:
        return [g for layer in self.layers for g in layer.grads]

    def zero_grads(self) -> None:
        for layer in self.layers:
            layer.zero_grads()

    def n_params(self) -> int:
        return sum(layer.n_params() for layer in self.layers)

    def get_weights(self) -> list:
        return [p.copy() for p in self.parameters()]

    def set_weights(self, weights) -> None:
        params = self.parameters()
        if len(weights) != len(params):
            raise ShapeMismatchError(
                f"expected {len(params)} weight arrays, got {len(weights)}"
            )
        for p, w in zip(params, weights):
            if p.shape != w.shape:
                raise ShapeMismatchError(f"weight shape {w.shape} != parameter {p.shape}")
            p[...] = w
