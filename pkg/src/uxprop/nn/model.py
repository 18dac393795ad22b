"""Feed-forward models: forward pass, input gradients and final-layer access."""

from dataclasses import dataclass, replace

import numpy as np

from .layers import (
    AvgPool2x2, Conv2D, Dense, Flatten, Identity, MaxPool2x2, ReLU, Softmax,
)

REGRESSION = "regression"
CLASSIFICATION = "classification"
RELU = "relu"
LINEAR = "linear"


@dataclass(frozen=True)
class Model:
    """An immutable stack of layers.

    ``activation_mode="linear"`` runs every ReLU as the identity, which is how
    the ReLU-removal ablation is expressed without touching the weights.
    """

    layers: tuple
    task: str
    input_shape: tuple
    activation_mode: str = RELU

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "input_shape", tuple(int(d) for d in self.input_shape))
        if self.task not in (REGRESSION, CLASSIFICATION):
            raise ValueError(f"unknown task {self.task!r}")
        if self.activation_mode not in (RELU, LINEAR):
            raise ValueError(f"unknown activation_mode {self.activation_mode!r}")
        shape = self.input_shape
        for i, layer in enumerate(self.layers):
            try:
                shape = layer.output_shape(shape)
            except ValueError as exc:
                raise ValueError(f"layer {i} ({layer.kind}): {exc}") from None
        if not any(isinstance(layer, Dense) for layer in self.layers):
            raise ValueError("model needs at least one Dense layer")
        has_softmax = isinstance(self.layers[-1], Softmax)
        if self.task == CLASSIFICATION and not has_softmax:
            raise ValueError("classification models must end with Softmax")
        if self.task == REGRESSION and (has_softmax or shape != (1,)):
            raise ValueError("regression models must end in a single linear output")
        if any(isinstance(layer, Softmax) for layer in self.layers[:-1]):
            raise ValueError("Softmax is only allowed as the last layer")

    @property
    def n_inputs(self):
        return int(np.prod(self.input_shape))

    @property
    def n_outputs(self):
        shape = self.input_shape
        for layer in self.score_layers:
            shape = layer.output_shape(shape)
        return int(np.prod(shape))

    @property
    def score_layers(self):
        """Layers up to the pre-softmax scores (logits for classifiers)."""
        if isinstance(self.layers[-1], Softmax):
            return self.layers[:-1]
        return self.layers

    def _active(self, layers):
        if self.activation_mode == LINEAR:
            return [Identity() if isinstance(layer, ReLU) else layer for layer in layers]
        return list(layers)

    def _batch(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim >= 1 and X.size % self.n_inputs == 0 and X.size > 0:
            if X.shape[1:] == self.input_shape or (X.ndim == 2 and X.shape[1] == self.n_inputs):
                return X.reshape((X.shape[0],) + self.input_shape)
        raise ValueError(
            f"input batch of shape {X.shape} does not match input shape {self.input_shape}"
        )

    def scores(self, X):
        """Pre-softmax outputs for a batch, shape (B, n_outputs)."""
        h = self._batch(X)
        for layer in self._active(self.score_layers):
            h, _ = layer.forward(h)
        return h

    def predict(self, X):
        h = self.scores(X)
        if self.task == CLASSIFICATION:
            h, _ = self.layers[-1].forward(h)
        return h

    def _check_target(self, target):
        n_out = self.n_outputs
        if not (isinstance(target, (int, np.integer)) and 0 <= target < n_out):
            raise ValueError(f"target {target!r} outside [0, {n_out})")

    def input_gradients(self, X, target, guided=False):
        """d score[target] / d x for every row of X, shaped like the rows."""
        self._check_target(target)
        h = self._batch(X)
        layers = self._active(self.score_layers)
        caches = []
        for layer in layers:
            h, cache = layer.forward(h)
            caches.append(cache)
        g = np.zeros_like(h)
        g[:, target] = 1.0
        for layer, cache in zip(reversed(layers), reversed(caches)):
            g = layer.backward(g, cache, guided=guided)
        return g

    @property
    def final_dense_index(self):
        return max(i for i, layer in enumerate(self.layers) if isinstance(layer, Dense))

    @property
    def final_dense_weight_count(self):
        return self.layers[self.final_dense_index].weight.size


def forward(model, x):
    """Model output for one input: a length-1 array (regression) or class probabilities."""
    return model.predict(np.asarray(x, dtype=np.float64)[None])[0]


def input_gradient(model, x, target=0):
    x = np.asarray(x, dtype=np.float64)
    return model.input_gradients(x[None], target)[0].reshape(x.shape)


def guided_gradient(model, x, target=0):
    x = np.asarray(x, dtype=np.float64)
    return model.input_gradients(x[None], target, guided=True)[0].reshape(x.shape)


@dataclass(frozen=True)
class FinalDenseSelector:
    layer_index: int
    weight_count: int


def final_dense(model):
    return FinalDenseSelector(model.final_dense_index, model.final_dense_weight_count)


def get_final_dense_weights(model):
    """Weights (no bias) of the last Dense layer, flattened row-major (out, in)."""
    return model.layers[model.final_dense_index].weight.ravel().copy()


def set_final_dense_weights(model, w):
    """Return a new model whose last Dense layer has weights ``w``; bias untouched."""
    idx = model.final_dense_index
    layer = model.layers[idx]
    w = np.asarray(w, dtype=np.float64)
    if w.size != layer.weight.size:
        raise ValueError(f"expected {layer.weight.size} final-layer weights, got {w.size}")
    layers = list(model.layers)
    layers[idx] = Dense(w.reshape(layer.weight.shape).copy(), layer.bias)
    return replace(model, layers=tuple(layers))


def with_activation_mode(model, mode):
    return replace(model, activation_mode=mode)


def with_params(model, params):
    """Rebuild ``model`` from a flat list of parameter arrays in layer order."""
    layers, k = [], 0
    for layer in model.layers:
        n = len(layer.params())
        layers.append(layer.with_params(params[k:k + n]) if n else layer)
        k += n
    return replace(model, layers=tuple(layers))


def all_params(model):
    return [p for layer in model.layers for p in layer.params()]


def _he_uniform(rng, shape, fan_in):
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)


def dense(rng, n_in, n_out):
    return Dense(_he_uniform(rng, (n_out, n_in), n_in), np.zeros(n_out))


def conv(rng, in_ch, out_ch, k=3, bias=True):
    kernel = _he_uniform(rng, (out_ch, in_ch, k, k), in_ch * k * k)
    return Conv2D(kernel, np.zeros(out_ch) if bias else None)


def reference_mlp(seed=0, n_features=9, hidden=64):
    """9 -> Dense(64) -> ReLU -> Dense(64) -> ReLU -> Dense(1)."""
    rng = np.random.default_rng(seed)
    layers = [dense(rng, n_features, hidden), ReLU(), dense(rng, hidden, hidden), ReLU(),
              dense(rng, hidden, 1)]
    return Model(layers, REGRESSION, (n_features,))


def reference_cnn(seed=0, input_shape=(28, 28, 3), n_classes=10, pool="avg", conv_bias=False):
    """Conv(8)-ReLU-Pool-Conv(16)-ReLU-Pool-Flatten-Dense(64)-ReLU-Dense(10)-Softmax.

    The default uses average pooling and bias-free convolutions, which keeps the
    linear-activation variant an exactly affine map (max pooling would not be).
    """
    rng = np.random.default_rng(seed)
    Pool = {"avg": AvgPool2x2, "max": MaxPool2x2}[pool]
    c = input_shape[2]
    layers = [conv(rng, c, 8, bias=conv_bias), ReLU(), Pool(),
              conv(rng, 8, 16, bias=conv_bias), ReLU(), Pool(), Flatten()]
    shape = tuple(input_shape)
    for layer in layers:
        shape = layer.output_shape(shape)
    layers += [dense(rng, shape[0], 64), ReLU(), dense(rng, 64, n_classes), Softmax()]
    return Model(layers, CLASSIFICATION, input_shape)
