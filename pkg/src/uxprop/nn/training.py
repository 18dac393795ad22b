"""Mini-batch SGD with momentum for the reference models."""

from dataclasses import dataclass

import numpy as np

from .model import CLASSIFICATION, all_params, with_params


@dataclass(frozen=True)
class TrainParams:
    lr: float = 0.01
    momentum: float = 0.9
    epochs: int = 5
    batch_size: int = 32
    seed: int = 0


def loss_and_grads(model, X, y):
    """Mean loss over the batch and gradients for every parameter array.

    Classification uses softmax cross-entropy on the logits, regression the
    mean squared error of the single output.
    """
    h = model._batch(X)
    layers = model._active(model.score_layers)
    caches = []
    for layer in layers:
        h, cache = layer.forward(h)
        caches.append(cache)
    n = h.shape[0]
    if model.task == CLASSIFICATION:
        y = np.asarray(y, dtype=np.int64)
        z = h - h.max(axis=1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        loss = -logp[np.arange(n), y].mean()
        g = np.exp(logp)
        g[np.arange(n), y] -= 1.0
        g /= n
    else:
        resid = h[:, 0] - np.asarray(y, dtype=np.float64)
        loss = float(np.mean(resid ** 2))
        g = (2.0 / n) * resid[:, None]
    grads_rev = []
    for layer, cache in zip(reversed(layers), reversed(caches)):
        grads_rev.append(layer.param_grads(g, cache))
        g = layer.backward(g, cache)
    grads = [gp for layer_grads in reversed(grads_rev) for gp in layer_grads]
    return float(loss), grads


def train(model, dataset, params=TrainParams(), history=None):
    """Train ``model`` on ``dataset`` (anything with ``features`` and ``targets``).

    Returns a new model; per-epoch mean training loss is appended to
    ``history`` when a list is given.
    """
    X = np.asarray(dataset.features, dtype=np.float64)
    y = np.asarray(dataset.targets)
    if len(X) == 0:
        raise ValueError("cannot train on an empty dataset")
    rng = np.random.default_rng(params.seed)
    weights = [p.copy() for p in all_params(model)]
    velocity = [np.zeros_like(p) for p in weights]
    for _ in range(params.epochs):
        order = rng.permutation(len(X))
        total = 0.0
        for start in range(0, len(X), params.batch_size):
            idx = order[start:start + params.batch_size]
            loss, grads = loss_and_grads(model, X[idx], y[idx])
            total += loss * len(idx)
            for w, v, g in zip(weights, velocity, grads):
                v *= params.momentum
                v -= params.lr * g
                w += v
            model = with_params(model, weights)
        if history is not None:
            history.append(total / len(X))
    return with_params(model, [w.copy() for w in weights])


def accuracy(model, X, labels):
    return float(np.mean(model.predict(X).argmax(axis=1) == np.asarray(labels)))
