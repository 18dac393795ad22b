import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uxprop.explainers import (
    GRADIENT_INPUT, GUIDED_BACKPROP, INTEGRATED_GRADIENTS, METHODS, OCCLUSION, SALIENCY,
    AffineExplainer, ExplainerSpec, explain, expected_m, gradient_input, guided_backprop,
    integrated_gradients, integrated_gradients_raw, occlusion, occlusion_raw, reduce_channels,
    resolve_target, saliency,
)
from uxprop.nn import (
    CLASSIFICATION, REGRESSION, Dense, Flatten, Model, Softmax, reference_cnn, reference_mlp,
)

from .conftest import linear_regressor

W = np.array([0.5, -1.0, 2.0, 0.0, 3.0])


@pytest.fixture
def lin():
    return linear_regressor(W, b=0.7)


def image_classifier(rng, shape=(6, 6, 2), classes=3):
    n = int(np.prod(shape))
    layers = [Flatten(), Dense(rng.normal(size=(classes, n)), rng.normal(size=classes)),
              Softmax()]
    return Model(layers, CLASSIFICATION, shape)


def test_linear_closed_forms(lin, rng):
    x = rng.normal(size=5)
    np.testing.assert_array_equal(saliency(lin, x).values, W)
    np.testing.assert_array_equal(gradient_input(lin, x).values, W * x)
    np.testing.assert_array_equal(guided_backprop(lin, x).values, W)
    np.testing.assert_allclose(integrated_gradients(lin, x).values, W * x, rtol=1e-12)


def test_tabular_occlusion_closed_form(lin, rng):
    x = rng.normal(size=5)
    fill = rng.normal(size=5)
    np.testing.assert_allclose(occlusion(lin, x, fill=fill).values, W * (x - fill), atol=1e-12)
    np.testing.assert_allclose(occlusion(lin, x).values, W * x, atol=1e-12)


@pytest.mark.parametrize("method", METHODS)
def test_constant_model_gives_zero(method, rng):
    const = linear_regressor(np.zeros(9), b=4.2)
    e = explain(ExplainerSpec(method), const, rng.normal(size=9))
    np.testing.assert_array_equal(e.values, np.zeros(9))


@pytest.mark.parametrize("method", METHODS)
def test_explainers_are_pure(method, rng):
    cnn = reference_cnn(0, input_shape=(10, 10, 3))
    x = rng.uniform(size=(10, 10, 3))
    keep = x.copy()
    a = explain(ExplainerSpec(method, ig_steps=8), cnn, x)
    b = explain(ExplainerSpec(method, ig_steps=8), cnn, x)
    np.testing.assert_array_equal(x, keep)
    np.testing.assert_array_equal(a.values, b.values)
    assert a.m == 100 and a.target == b.target


@pytest.mark.parametrize("method", METHODS)
def test_reference_model_dimensions(method, rng):
    mlp = reference_mlp(0)
    assert explain(ExplainerSpec(method), mlp, rng.normal(size=9)).m == 9
    assert expected_m(reference_cnn(0)) == 784


def test_mnist_sized_explanation_has_784_entries(rng):
    cnn = reference_cnn(0)
    assert saliency(cnn, rng.uniform(size=(28, 28, 3))).m == 784


def test_reduce_channels_is_signed_mean():
    raw = np.zeros((2, 2, 3))
    raw[0, 0] = [3.0, -3.0, 6.0]
    raw[1, 1] = [-1.0, -2.0, -3.0]
    np.testing.assert_array_equal(reduce_channels(raw), [2.0, 0.0, 0.0, -2.0])
    batch = np.stack([raw, 2 * raw])
    np.testing.assert_array_equal(reduce_channels(batch)[1], [4.0, 0.0, 0.0, -4.0])


def test_resolve_target_follows_prediction(rng):
    clf = image_classifier(rng)
    x = rng.uniform(size=(6, 6, 2))
    top = int(np.argmax(clf.predict(x[None])[0]))
    assert resolve_target(ExplainerSpec(SALIENCY), clf, x) == top
    assert resolve_target(ExplainerSpec(SALIENCY, target_rule=1), clf, x) == 1
    assert resolve_target(ExplainerSpec(SALIENCY), reference_mlp(0), np.zeros(9)) == 0


def test_unknown_method_rejected():
    with pytest.raises(ValueError):
        ExplainerSpec("LRP")
    with pytest.raises(ValueError):
        ExplainerSpec(INTEGRATED_GRADIENTS, ig_steps=1)


def brute_force_occlusion(model, x, target, patch, stride, fill):
    h, w, _ = x.shape
    base = model.scores(x[None])[0, target]
    total, count = np.zeros((h, w)), np.zeros((h, w))
    for i in range(0, h - patch + 1, stride):
        for j in range(0, w - patch + 1, stride):
            xo = x.copy()
            xo[i:i + patch, j:j + patch, :] = fill
            total[i:i + patch, j:j + patch] += base - model.scores(xo[None])[0, target]
            count[i:i + patch, j:j + patch] += 1
    return np.where(count > 0, total / np.maximum(count, 1), 0.0)


@pytest.mark.parametrize("patch, stride", [(4, 4), (4, 2), (3, 1), (2, 5)])
def test_image_occlusion_matches_brute_force(rng, patch, stride):
    clf = image_classifier(rng)
    x = rng.uniform(size=(6, 6, 2))
    got = occlusion_raw(clf, x[None], 2, patch, patch, stride, 0.3)[0]
    np.testing.assert_allclose(got, brute_force_occlusion(clf, x, 2, patch, stride, 0.3),
                               atol=1e-12)


def test_occlusion_uncovered_pixels_are_zero(rng):
    clf = image_classifier(rng)
    got = occlusion_raw(clf, rng.uniform(size=(1, 6, 6, 2)), 0, 4, 4, 4, 0.0)[0]
    assert np.all(got[4:, :] == 0) and np.all(got[:, 4:] == 0)


def test_occlusion_patch_too_large(rng):
    clf = image_classifier(rng)
    with pytest.raises(ValueError, match="larger"):
        occlusion(clf, rng.uniform(size=(6, 6, 2)), patch=(7, 7))


def test_occlusion_uses_scores_not_probabilities(rng):
    clf = image_classifier(rng)
    x = rng.uniform(size=(6, 6, 2))
    drop = occlusion_raw(clf, x[None], 0, 6, 6, 6, 0.0)[0, 0, 0]
    logits = clf.scores(np.stack([x, np.zeros_like(x)]))[:, 0]
    assert drop == pytest.approx(logits[0] - logits[1], rel=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_integrated_gradients_completeness_mlp(seed):
    r = np.random.default_rng(seed)
    mlp = reference_mlp(seed % 7)
    x = r.normal(size=9)
    attr = integrated_gradients_raw(mlp, x[None], 0)[0]
    gap = mlp.scores(x[None])[0, 0] - mlp.scores(np.zeros((1, 9)))[0, 0]
    assert abs(attr.sum() - gap) <= 1e-3 * max(abs(gap), 1e-12) + 1e-9


def test_integrated_gradients_baseline(lin, rng):
    x, base = rng.normal(size=5), rng.normal(size=5)
    got = integrated_gradients(lin, x, baseline=base, steps=4).values
    np.testing.assert_allclose(got, W * (x - base), atol=1e-12)


def test_integrated_gradients_reduces_after_integration(rng):
    cnn = reference_cnn(1, input_shape=(10, 10, 3))
    x = rng.uniform(size=(10, 10, 3))
    spec = ExplainerSpec(INTEGRATED_GRADIENTS, ig_steps=16)
    raw = integrated_gradients_raw(cnn, x[None], 4, steps=16)[0]
    np.testing.assert_allclose(explain(spec, cnn, x, 4).values, reduce_channels(raw),
                               atol=1e-15)


def test_gradient_methods_on_image_are_reduced(rng):
    cnn = reference_cnn(2, input_shape=(10, 10, 3))
    x = rng.uniform(size=(10, 10, 3))
    g = cnn.input_gradients(x[None], 1)[0]
    np.testing.assert_allclose(explain(ExplainerSpec(SALIENCY), cnn, x, 1).values,
                               reduce_channels(g))
    np.testing.assert_allclose(explain(ExplainerSpec(GRADIENT_INPUT), cnn, x, 1).values,
                               reduce_channels(g * x))
    gb = cnn.input_gradients(x[None], 1, guided=True)[0]
    np.testing.assert_allclose(explain(ExplainerSpec(GUIDED_BACKPROP), cnn, x, 1).values,
                               reduce_channels(gb))


def test_batch_matches_single(rng):
    mlp = reference_mlp(3)
    X = rng.normal(size=(5, 9))
    for method in METHODS:
        spec = ExplainerSpec(method, ig_steps=8)
        batch = spec.batch(mlp, X, 0)
        for i in range(5):
            np.testing.assert_allclose(batch[i], explain(spec, mlp, X[i]).values, atol=1e-12)


def test_affine_explainer(rng):
    A, b = rng.normal(size=(4, 3)), rng.normal(size=4)
    X = rng.normal(size=(2, 3))
    np.testing.assert_allclose(AffineExplainer(A, b).batch(None, X, 0), X @ A.T + b)
    assert OCCLUSION in METHODS and REGRESSION == linear_regressor([1.0]).task
