"""Feature attributions e(x, f) for the five methods studied.

All methods are deterministic functions of ``(spec, model, x)``. Image
attributions are computed per input channel and then reduced to one value per
pixel with a signed channel mean, so an MNIST explanation has 28*28 = 784
entries; tabular explanations keep one entry per feature.

The batched entry point :func:`explain_batch` is what the uncertainty code
uses: it evaluates the explainer for many inputs at once and returns an
``(B, m)`` array.
"""

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .nn.model import CLASSIFICATION

SALIENCY = "Saliency"
GRADIENT_INPUT = "GradientInput"
GUIDED_BACKPROP = "GuidedBackprop"
INTEGRATED_GRADIENTS = "IntegratedGradients"
OCCLUSION = "Occlusion"
METHODS = (SALIENCY, GRADIENT_INPUT, GUIDED_BACKPROP, INTEGRATED_GRADIENTS, OCCLUSION)
GRADIENT_METHODS = METHODS[:4]

PREDICTED_CLASS = "PredictedClass"
REGRESSION_OUTPUT = "RegressionOutput"

# Rows per gradient pass; small batches are faster for the convolutions.
_GRAD_CHUNK = 64


@dataclass(frozen=True)
class ExplainerSpec:
    """Method plus its (fixed) hyperparameters.

    ``target_rule`` is ``"PredictedClass"``, ``"RegressionOutput"`` or an int
    naming a fixed class. ``fill_value`` may be a scalar or one value per
    tabular feature.
    """

    method: str
    target_rule: Union[str, int] = PREDICTED_CLASS
    ig_steps: int = 64
    ig_baseline: Optional[np.ndarray] = None
    patch_h: int = 4
    patch_w: int = 4
    stride: int = 4
    fill_value: Union[float, np.ndarray] = 0.0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown explainer {self.method!r}; choose from {METHODS}")
        if self.ig_steps < 2:
            raise ValueError("ig_steps must be at least 2")
        if self.stride < 1 or self.patch_h < 1 or self.patch_w < 1:
            raise ValueError("occlusion patch and stride must be positive")

    @property
    def name(self):
        return self.method

    def batch(self, model, X, target):
        return explain_batch(self, model, X, target)


@dataclass(frozen=True)
class Explanation:
    values: np.ndarray
    method: str
    target: int
    sample_id: Optional[int] = None

    @property
    def m(self):
        return self.values.size


def expected_m(model):
    shape = model.input_shape
    return shape[0] * shape[1] if len(shape) == 3 else int(np.prod(shape))


def resolve_target(spec, model, x):
    """Output index explained for ``x`` under the spec's target rule."""
    if model.task != CLASSIFICATION:
        return 0
    if isinstance(spec.target_rule, (int, np.integer)):
        return int(spec.target_rule)
    if spec.target_rule == PREDICTED_CLASS:
        return int(np.argmax(model.scores(np.asarray(x)[None])[0]))
    raise ValueError(f"target rule {spec.target_rule!r} does not apply to a classifier")


def reduce_channels(raw):
    """Signed mean over the channel axis: (..., H, W, C) -> (..., H*W)."""
    raw = np.asarray(raw, dtype=np.float64)
    reduced = raw.mean(axis=-1)
    return reduced.reshape(reduced.shape[:-2] + (-1,))


def _finish(model, raw):
    """Flatten per-input attributions of shape (B, *input_shape) to (B, m)."""
    if len(model.input_shape) == 3:
        return reduce_channels(raw)
    return raw.reshape(raw.shape[0], -1)


def _gradients(model, X, target, guided=False):
    out = [model.input_gradients(X[i:i + _GRAD_CHUNK], target, guided=guided)
           for i in range(0, len(X), _GRAD_CHUNK)]
    return np.concatenate(out).reshape(X.shape)


def _as_batch(model, X):
    X = np.asarray(X, dtype=np.float64)
    return X.reshape((-1,) + model.input_shape)


def saliency_raw(model, X, target):
    return _gradients(model, _as_batch(model, X), target)


def gradient_input_raw(model, X, target):
    X = _as_batch(model, X)
    return _gradients(model, X, target) * X


def guided_backprop_raw(model, X, target):
    return _gradients(model, _as_batch(model, X), target, guided=True)


def integrated_gradients_raw(model, X, target, baseline=None, steps=64):
    """Midpoint-rule integrated gradients, before any channel reduction."""
    if steps < 2:
        raise ValueError("integrated gradients needs at least 2 steps")
    X = _as_batch(model, X)
    base = np.zeros(model.input_shape) if baseline is None else (
        np.asarray(baseline, dtype=np.float64).reshape(model.input_shape))
    alphas = (np.arange(steps) + 0.5) / steps
    flat_base = base.ravel()
    diff = X.reshape(len(X), -1) - flat_base
    out = np.empty_like(diff)
    for i, d in enumerate(diff):
        path = flat_base + alphas[:, None] * d
        out[i] = _gradients(model, path.reshape((-1,) + model.input_shape), target).reshape(
            steps, -1).mean(axis=0) * d
    return out.reshape(X.shape)


def _patch_positions(size, patch, stride):
    return list(range(0, size - patch + 1, stride))


def occlusion_raw(model, X, target, patch_h=4, patch_w=4, stride=4, fill_value=0.0):
    """Score drop when occluding patches (images) or single features (tabular).

    Image attributions are per pixel (all channels share the patch), averaged
    over the patches that cover the pixel; uncovered pixels get 0.
    """
    X = _as_batch(model, X)
    base = model.scores(X)[:, target]
    if len(model.input_shape) == 3:
        h, w, _ = model.input_shape
        if patch_h > h or patch_w > w:
            raise ValueError(f"occlusion patch {patch_h}x{patch_w} larger than image {h}x{w}")
        total = np.zeros((len(X), h, w))
        count = np.zeros((h, w))
        patches = [(i, j) for i in _patch_positions(h, patch_h, stride)
                   for j in _patch_positions(w, patch_w, stride)]
        occluded = np.repeat(X[:, None], len(patches), axis=1)
        for p, (i, j) in enumerate(patches):
            occluded[:, p, i:i + patch_h, j:j + patch_w, :] = fill_value
            count[i:i + patch_h, j:j + patch_w] += 1
        scores = model.scores(occluded.reshape((-1,) + model.input_shape))[:, target]
        drops = base[:, None] - scores.reshape(len(X), len(patches))
        for p, (i, j) in enumerate(patches):
            total[:, i:i + patch_h, j:j + patch_w] += drops[:, p, None, None]
        return np.divide(total, count, out=np.zeros_like(total), where=count > 0)
    n = model.n_inputs
    fill = np.broadcast_to(np.asarray(fill_value, dtype=np.float64), (n,))
    occluded = np.repeat(X[:, None], n, axis=1)
    idx = np.arange(n)
    occluded[:, idx, idx] = fill
    scores = model.scores(occluded.reshape(-1, n))[:, target]
    return base[:, None] - scores.reshape(len(X), n)


def explain_batch(spec, model, X, target):
    """Explanations for every row of ``X`` as an (B, m) array."""
    method = spec.method
    if method == SALIENCY:
        raw = saliency_raw(model, X, target)
    elif method == GRADIENT_INPUT:
        raw = gradient_input_raw(model, X, target)
    elif method == GUIDED_BACKPROP:
        raw = guided_backprop_raw(model, X, target)
    elif method == INTEGRATED_GRADIENTS:
        raw = integrated_gradients_raw(model, X, target, spec.ig_baseline, spec.ig_steps)
    else:
        raw = occlusion_raw(model, X, target, spec.patch_h, spec.patch_w, spec.stride,
                            spec.fill_value)
        if len(model.input_shape) == 3:
            return raw.reshape(raw.shape[0], -1)
        return raw
    return _finish(model, raw)


def explain(spec, model, x, target=None, sample_id=None):
    x = np.asarray(x, dtype=np.float64)
    if target is None:
        target = resolve_target(spec, model, x)
    values = explain_batch(spec, model, x[None], target)[0]
    if values.size != expected_m(model):
        raise AssertionError(f"explanation has {values.size} entries, expected {expected_m(model)}")
    if not np.all(np.isfinite(values)):
        raise ValueError(f"{spec.method} produced non-finite attributions")
    return Explanation(values, spec.method, target, sample_id)


def saliency(model, x, target=0):
    return explain(ExplainerSpec(SALIENCY), model, x, target)


def gradient_input(model, x, target=0):
    return explain(ExplainerSpec(GRADIENT_INPUT), model, x, target)


def guided_backprop(model, x, target=0):
    return explain(ExplainerSpec(GUIDED_BACKPROP), model, x, target)


def integrated_gradients(model, x, target=0, baseline=None, steps=64):
    spec = ExplainerSpec(INTEGRATED_GRADIENTS, ig_steps=steps, ig_baseline=baseline)
    return explain(spec, model, x, target)


def occlusion(model, x, target=0, patch=(4, 4), stride=4, fill=0.0):
    spec = ExplainerSpec(OCCLUSION, patch_h=patch[0], patch_w=patch[1], stride=stride,
                         fill_value=fill)
    return explain(spec, model, x, target)


@dataclass(frozen=True)
class AffineExplainer:
    """Synthetic explainer ``e(x) = A x + b`` ignoring the model.

    First-order propagation is exact for it, which makes it the reference
    case for checking both covariance estimators.
    """

    A: np.ndarray
    b: np.ndarray = field(default=None)
    name: str = "Affine"

    def batch(self, model, X, target):
        X = np.asarray(X, dtype=np.float64).reshape(-1, self.A.shape[1])
        out = X @ self.A.T
        return out if self.b is None else out + self.b
