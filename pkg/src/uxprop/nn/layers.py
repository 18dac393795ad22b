"""Layer implementations for the feed-forward engine.

Activations are batched and channel-last: dense inputs are ``(B, features)``,
image inputs ``(B, H, W, C)``. Every layer exposes

* ``forward(x) -> (y, cache)``
* ``backward(gy, cache, guided=False) -> gx``
* ``param_grads(gy, cache) -> list[ndarray]`` (parametrised layers only)

Caches hold only what the backward pass needs; layers never mutate state.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class Layer:
    kind = "Layer"

    def params(self):
        return []

    def with_params(self, params):
        return self

    def output_shape(self, input_shape):
        return tuple(input_shape)

    def describe(self):
        return {"kind": self.kind}

    def param_grads(self, gy, cache):
        return []


class Dense(Layer):
    kind = "Dense"

    def __init__(self, weight, bias):
        weight = np.asarray(weight, dtype=np.float64)
        bias = np.asarray(bias, dtype=np.float64)
        if weight.ndim != 2:
            raise ValueError("Dense weight must be a matrix (out, in)")
        if bias.shape != (weight.shape[0],):
            raise ValueError(
                f"Dense bias length {bias.size} does not match {weight.shape[0]} weight rows"
            )
        self.weight = weight
        self.bias = bias

    @property
    def in_dim(self):
        return self.weight.shape[1]

    @property
    def out_dim(self):
        return self.weight.shape[0]

    def params(self):
        return [self.weight, self.bias]

    def with_params(self, params):
        return Dense(*params)

    def output_shape(self, input_shape):
        if tuple(input_shape) != (self.in_dim,):
            raise ValueError(f"Dense expects input shape ({self.in_dim},), got {input_shape}")
        return (self.out_dim,)

    def describe(self):
        return {"kind": self.kind, "in": self.in_dim, "out": self.out_dim}

    def forward(self, x):
        return x @ self.weight.T + self.bias, x

    def backward(self, gy, cache, guided=False):
        return gy @ self.weight

    def param_grads(self, gy, cache):
        return [gy.T @ cache, gy.sum(axis=0)]


class ReLU(Layer):
    """Rectifier. In guided mode the backward pass also drops negative signals."""

    kind = "ReLU"

    def forward(self, x):
        return np.maximum(x, 0.0), x > 0

    def backward(self, gy, cache, guided=False):
        mask = cache & (gy > 0) if guided else cache
        return np.where(mask, gy, 0.0)


class Identity(Layer):
    """Stand-in for ReLU when a model runs with linear activations."""

    kind = "Identity"

    def forward(self, x):
        return x, None

    def backward(self, gy, cache, guided=False):
        return gy


class Conv2D(Layer):
    """Valid-padding, stride-1 convolution with kernel layout (out, in, kh, kw)."""

    kind = "Conv2D"

    def __init__(self, kernel, bias=None):
        kernel = np.asarray(kernel, dtype=np.float64)
        if kernel.ndim != 4:
            raise ValueError("Conv2D kernel must have shape (out_ch, in_ch, kh, kw)")
        if bias is not None:
            bias = np.asarray(bias, dtype=np.float64)
            if bias.shape != (kernel.shape[0],):
                raise ValueError(
                    f"Conv2D bias length {bias.size} does not match out_ch={kernel.shape[0]}"
                )
        self.kernel = kernel
        self.bias = bias

    @property
    def use_bias(self):
        return self.bias is not None

    def params(self):
        return [self.kernel] if self.bias is None else [self.kernel, self.bias]

    def with_params(self, params):
        return Conv2D(params[0], params[1] if len(params) > 1 else None)

    def output_shape(self, input_shape):
        out_ch, in_ch, kh, kw = self.kernel.shape
        if len(input_shape) != 3 or input_shape[2] != in_ch:
            raise ValueError(f"Conv2D expects (H, W, {in_ch}) input, got {input_shape}")
        h, w = input_shape[0] - kh + 1, input_shape[1] - kw + 1
        if h < 1 or w < 1:
            raise ValueError(f"Conv2D kernel {kh}x{kw} larger than input {input_shape}")
        return (h, w, out_ch)

    def describe(self):
        out_ch, in_ch, kh, kw = self.kernel.shape
        return {"kind": self.kind, "out_ch": out_ch, "in_ch": in_ch, "kh": kh, "kw": kw,
                "bias": self.use_bias}

    def _cols(self, x):
        _, in_ch, kh, kw = self.kernel.shape
        win = sliding_window_view(x, (kh, kw), axis=(1, 2))  # B, Ho, Wo, C, kh, kw
        return win.reshape(-1, in_ch * kh * kw), win.shape[:3]

    def forward(self, x):
        out_ch = self.kernel.shape[0]
        cols, (b, ho, wo) = self._cols(x)
        y = cols @ self.kernel.reshape(out_ch, -1).T
        if self.bias is not None:
            y += self.bias
        return y.reshape(b, ho, wo, out_ch), x

    def backward(self, gy, cache, guided=False):
        out_ch, in_ch, kh, kw = self.kernel.shape
        b, ho, wo, _ = gy.shape
        gx = np.zeros(cache.shape)
        if in_ch < 4:
            # few input channels: per-offset products are cheaper than one wide one
            for i in range(kh):
                for j in range(kw):
                    gx[:, i:i + ho, j:j + wo, :] += gy @ self.kernel[:, :, i, j]
            return gx
        k2 = self.kernel.transpose(0, 2, 3, 1).reshape(out_ch, -1)
        g = (gy.reshape(-1, out_ch) @ k2).reshape(b, ho, wo, kh, kw, in_ch)
        for i in range(kh):
            for j in range(kw):
                gx[:, i:i + ho, j:j + wo, :] += g[:, :, :, i, j, :]
        return gx

    def param_grads(self, gy, cache):
        out_ch = self.kernel.shape[0]
        cols, _ = self._cols(cache)
        g2 = gy.reshape(-1, out_ch)
        grads = [(g2.T @ cols).reshape(self.kernel.shape)]
        if self.bias is not None:
            grads.append(g2.sum(axis=0))
        return grads


def _pool_view(x):
    b, h, w, c = x.shape
    h2, w2 = h // 2, w // 2
    v = x[:, :2 * h2, :2 * w2, :].reshape(b, h2, 2, w2, 2, c)
    return v.transpose(0, 1, 3, 5, 2, 4).reshape(b, h2, w2, c, 4)


def _unpool(g4, shape):
    b, h, w, c = shape
    h2, w2 = h // 2, w // 2
    gx = np.zeros(shape)
    g = g4.reshape(b, h2, w2, c, 2, 2).transpose(0, 1, 4, 2, 5, 3).reshape(b, 2 * h2, 2 * w2, c)
    gx[:, :2 * h2, :2 * w2, :] = g
    return gx


class _Pool2x2(Layer):
    def output_shape(self, input_shape):
        if len(input_shape) != 3 or input_shape[0] < 2 or input_shape[1] < 2:
            raise ValueError(f"{self.kind} needs an (H>=2, W>=2, C) input, got {input_shape}")
        return (input_shape[0] // 2, input_shape[1] // 2, input_shape[2])


class MaxPool2x2(_Pool2x2):
    """2x2/stride-2 max pooling; on ties the gradient goes to the first maximum."""

    kind = "MaxPool2x2"

    def forward(self, x):
        v = _pool_view(x)
        idx = v.argmax(axis=-1)
        return np.take_along_axis(v, idx[..., None], axis=-1)[..., 0], (x.shape, idx)

    def backward(self, gy, cache, guided=False):
        shape, idx = cache
        g4 = np.zeros(idx.shape + (4,))
        np.put_along_axis(g4, idx[..., None], gy[..., None], axis=-1)
        return _unpool(g4, shape)


class AvgPool2x2(_Pool2x2):
    kind = "AvgPool2x2"

    def forward(self, x):
        return _pool_view(x).mean(axis=-1), x.shape

    def backward(self, gy, cache, guided=False):
        g4 = np.broadcast_to(gy[..., None] * 0.25, gy.shape + (4,))
        return _unpool(g4, cache)


class Flatten(Layer):
    kind = "Flatten"

    def output_shape(self, input_shape):
        return (int(np.prod(input_shape)),)

    def forward(self, x):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, gy, cache, guided=False):
        return gy.reshape(cache)


class Softmax(Layer):
    kind = "Softmax"

    def forward(self, x):
        z = x - x.max(axis=1, keepdims=True)
        e = np.exp(z)
        s = e / e.sum(axis=1, keepdims=True)
        return s, s

    def backward(self, gy, cache, guided=False):
        s = cache
        return s * (gy - np.sum(gy * s, axis=1, keepdims=True))


PARAMETER_FREE = {cls.kind: cls for cls in (ReLU, MaxPool2x2, AvgPool2x2, Flatten, Softmax)}
