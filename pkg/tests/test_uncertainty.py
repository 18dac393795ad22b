from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from uxprop.explainers import (
    GRADIENT_INPUT, METHODS, OCCLUSION, SALIENCY, AffineExplainer, ExplainerSpec,
)
from uxprop.linalg import RngStream, frobenius_sq, is_covariance, trace
from uxprop.nn import Dense, get_final_dense_weights, reference_mlp
from uxprop.uncertainty import (
    FINAL_DENSE_WEIGHTS, INPUT, DegenerateReferenceError, PerturbationTarget,
    analytical_covariance, jacobian_block, make_evaluator, mc_covariance, mc_samples, mue,
    mue_curve_analytical, uxai, uxai_input, uxai_weights,
)

from .conftest import linear_regressor

W = np.array([0.5, -1.0, 2.0, 1.5, 3.0, -0.25, 0.8, -2.0, 1.0])


@pytest.fixture
def lin():
    return linear_regressor(W, b=0.3)


def identity(n):
    return AffineExplainer(np.eye(n), name="Identity")


class Square:
    """Stub explainer e(x) = x**2, smooth with curvature everywhere."""

    name = "Square"

    def batch(self, model, X, target):
        return np.asarray(X, dtype=np.float64).reshape(len(X), -1) ** 2


def hidden_pattern(mlp, X):
    h, pattern = np.atleast_2d(X), []
    for layer in mlp.layers:
        if isinstance(layer, Dense) and layer is not mlp.layers[-1]:
            h = h @ layer.weight.T + layer.bias
            pattern.append(h > 0)
            h = np.maximum(h, 0)
    return np.concatenate(pattern, axis=1)


@pytest.mark.parametrize("delta", [1e-6, 1e-4, 0.5])
def test_identity_stub_jacobian_is_identity(lin, rng, delta):
    J = jacobian_block(identity(9), lin, rng.normal(size=9), INPUT, delta)
    np.testing.assert_allclose(J.matrix, np.eye(9), atol=1e-9 / delta * 1e-3)
    assert J.shape == (9, 9) and J.target == PerturbationTarget(INPUT, 9)


def test_gradient_input_on_linear_regressor_is_diagonal(lin, rng):
    J = jacobian_block(ExplainerSpec(GRADIENT_INPUT), lin, rng.normal(size=9))
    np.testing.assert_allclose(J.matrix, np.diag(W), atol=1e-9)


def test_relu_mlp_saliency_jacobian_is_exactly_zero(trained_mlp, auto_mpg):
    _, test = auto_mpg
    delta = 1e-4
    checked = 0
    for x in test.features[:20]:
        probes = x + delta * np.eye(9)
        if not np.all(hidden_pattern(trained_mlp, probes) == hidden_pattern(trained_mlp, x)):
            continue
        J = jacobian_block(ExplainerSpec(SALIENCY), trained_mlp, x, INPUT, delta)
        np.testing.assert_array_equal(J.matrix, np.zeros((9, 9)))
        checked += 1
    assert checked >= 10


def test_jacobian_rejects_bad_delta(lin):
    with pytest.raises(ValueError):
        jacobian_block(identity(9), lin, np.zeros(9), INPUT, 0.0)


def test_jacobian_names_non_finite_coordinate(lin):
    class Blows:
        name = "Blows"

        def batch(self, model, X, target):
            out = np.array(X, dtype=np.float64).reshape(len(X), -1)
            out[out[:, 3] > 0.5] = np.inf
            return out

    with pytest.raises(FloatingPointError, match="coordinate 3"):
        jacobian_block(Blows(), lin, np.full(9, 0.5), INPUT, 1e-3)


def test_weight_jacobian_shape(trained_mlp, auto_mpg):
    x = auto_mpg[1].features[0]
    for method in METHODS:
        J = jacobian_block(ExplainerSpec(method, ig_steps=8), trained_mlp, x,
                           FINAL_DENSE_WEIGHTS)
        assert J.shape == (9, 64) and np.all(np.isfinite(J.matrix))


def test_saliency_weight_jacobian_closed_form(rng):
    # saliency is linear in the last weights: grad = W1^T D1 W2^T D2 w3
    mlp = reference_mlp(2)
    x = rng.normal(size=9)
    (W1, b1), (W2, b2) = mlp.layers[0].params(), mlp.layers[2].params()
    h1 = W1 @ x + b1
    d1 = (h1 > 0).astype(float)
    d2 = (W2 @ np.maximum(h1, 0) + b2 > 0).astype(float)
    expected = W1.T @ np.diag(d1) @ W2.T @ np.diag(d2)
    J = jacobian_block(ExplainerSpec(SALIENCY), mlp, x, FINAL_DENSE_WEIGHTS)
    np.testing.assert_allclose(J.matrix, expected, atol=1e-9)


def test_analytical_hand_example():
    cov = analytical_covariance(np.array([[1.0, 0.0], [0.0, 2.0]]), np.sqrt(0.5))
    np.testing.assert_allclose(cov.matrix, [[0.5, 0.0], [0.0, 2.0]], rtol=1e-15)
    np.testing.assert_array_equal(analytical_covariance(np.eye(3), 0.0).matrix, np.zeros((3, 3)))
    with pytest.raises(ValueError):
        analytical_covariance(np.eye(2), -1.0)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 8), st.integers(1, 12)),
              elements=st.floats(-10, 10)), st.floats(1e-4, 10))
def test_analytical_trace_is_frobenius(J, sigma):
    cov = analytical_covariance(J, sigma)
    np.testing.assert_array_equal(cov.matrix, cov.matrix.T)
    assert is_covariance(cov.matrix)
    assert cov.trace == pytest.approx(sigma ** 2 * frobenius_sq(J), rel=1e-12, abs=1e-300)


def test_analytical_scales_as_sigma_squared(rng):
    J = rng.normal(size=(4, 6))
    a, b = analytical_covariance(J, 0.1).matrix, analytical_covariance(J, 0.3).matrix
    np.testing.assert_allclose(b, 9 * a, rtol=1e-12)


def test_mc_zero_sigma_is_zero(lin, rng):
    cov = mc_covariance(ExplainerSpec(OCCLUSION), lin, rng.normal(size=9), INPUT, 0.0, 5,
                        RngStream(1))
    np.testing.assert_array_equal(cov.matrix, np.zeros((9, 9)))


def test_mc_concentration_on_identity(lin):
    cov = mc_covariance(identity(9), lin, np.zeros(9), INPUT, 0.1, 10_000, RngStream(4))
    assert np.all(np.abs(np.diag(cov.matrix) / 0.01 - 1) <= 0.10)
    assert cov.n_samples == 10_000 and cov.seed == 4


def test_mc_matches_analytical_for_linear_gradient_input(lin, rng):
    x = rng.normal(size=9)
    spec = ExplainerSpec(GRADIENT_INPUT)
    lin_cov = analytical_covariance(jacobian_block(spec, lin, x), 0.05)
    mc_cov = mc_covariance(spec, lin, x, INPUT, 0.05, 2000, RngStream(8))
    assert mc_cov.trace == pytest.approx(lin_cov.trace, rel=0.15)


def test_mc_rejects_small_n(lin):
    with pytest.raises(ValueError):
        mc_covariance(identity(9), lin, np.zeros(9), INPUT, 0.1, 1, RngStream(0))


def test_mc_holds_class_fixed(rng):
    # the target index is chosen once, before any perturbation
    ev = make_evaluator(ExplainerSpec(SALIENCY), linear_regressor(W), np.zeros(9), INPUT)
    assert ev.target == 0
    draws = mc_samples(ev, 1.0, 4, RngStream(0))
    np.testing.assert_array_equal(draws, np.tile(W, (4, 1)))


def test_mue_examples():
    assert mue(np.eye(2), np.array([2.0, 0.0])) == 0.25
    assert mue(np.zeros((2, 2)), np.array([2.0, 0.0])) == 0.0
    base = mue(np.eye(3), np.array([1.0, 2.0, 3.0]))
    assert mue(np.eye(3), 3 * np.array([1.0, 2.0, 3.0])) == pytest.approx(base / 9, rel=1e-15)


def test_mue_degenerate_and_shape_errors():
    with pytest.raises(DegenerateReferenceError):
        mue(np.eye(2), np.array([1e-7, 0.0]))
    with pytest.raises(ValueError):
        mue(np.eye(3), np.array([1.0, 2.0]))


def test_curve_sigma_squared_law(rng):
    J, e = rng.normal(size=(5, 7)), rng.normal(size=5)
    curve = dict(mue_curve_analytical(J, e, [1e-3, 2e-3, 0.1, 0.2]))
    assert curve[2e-3] / curve[1e-3] == pytest.approx(4, rel=1e-12)
    assert curve[0.2] / curve[0.1] == pytest.approx(4, rel=1e-12)
    sig = np.array([1e-6, 1e-4, 1e-2])
    vals = np.array([v for _, v in mue_curve_analytical(J, e, sig)])
    slope = np.polyfit(np.log(sig ** 2), np.log(vals), 1)[0]
    assert slope == pytest.approx(1.0, abs=1e-12)
    assert all(v == 0 for _, v in mue_curve_analytical(np.zeros((5, 7)), e, sig))


def test_uxai_empty_and_ordering(lin, rng):
    x = rng.normal(size=9)
    spec = ExplainerSpec(GRADIENT_INPUT)
    assert uxai_input(spec, lin, x, []) == []
    sigmas = [1e-3, 1e-1, 1e-2]
    records = uxai_input(spec, lin, x, sigmas, n=50, rng=RngStream(3), sample_id=7,
                         dataset="AutoMPG")
    assert [r.sigma for r in records] == sigmas
    for r in records:
        assert (r.dataset, r.sample_id, r.explainer, r.target, r.m) == (
            "AutoMPG", 7, GRADIENT_INPUT, INPUT, 9)
        assert r.mue_lin >= 0 and r.mue_mc >= 0 and r.n_mc == 50
        assert r.ref_norm_sq == pytest.approx(float(np.sum((W * x) ** 2)))


def test_uxai_is_deterministic_across_workers(trained_mlp, auto_mpg):
    x = auto_mpg[1].features[3]
    spec = ExplainerSpec(OCCLUSION)
    runs = [uxai_input(spec, trained_mlp, x, [1e-3, 1e-2], n=100, rng=RngStream(5), workers=w)
            for w in (1, 2, 3)]
    assert runs[0] == runs[1] == runs[2]


def test_uxai_passes_jacobian_to_hook(lin, rng):
    seen = []
    uxai(identity(9), lin, rng.normal(size=9), INPUT, [0.1], 10, 1e-4, RngStream(0),
         on_jacobian=lambda J, ref: seen.append((J.shape, ref.shape)))
    assert seen == [((9, 9), (9,))]


def test_uxai_weights_zero_layer_is_degenerate(rng):
    mlp = reference_mlp(0)
    last = mlp.layers[-1]
    zeroed = replace(mlp, layers=mlp.layers[:-1] + (Dense(np.zeros_like(last.weight), [0.0]),))
    assert not get_final_dense_weights(zeroed).any()
    with pytest.raises(DegenerateReferenceError):
        uxai_weights(ExplainerSpec(SALIENCY), zeroed, rng.normal(size=9), [0.1])


def test_uxai_weights_records(trained_mlp, auto_mpg):
    x = auto_mpg[1].features[0]
    records = uxai_weights(ExplainerSpec(SALIENCY), trained_mlp, x, [1e-4, 1e-3], n=20)
    assert [r.target for r in records] == [FINAL_DENSE_WEIGHTS] * 2
    assert records[1].mue_lin == pytest.approx(100 * records[0].mue_lin, rel=1e-12)


def test_affine_trace_exactness(rng):
    A = rng.normal(size=(50, 20))
    ev = make_evaluator(AffineExplainer(A, rng.normal(size=50)), linear_regressor(np.ones(20)),
                        rng.normal(size=20), INPUT)
    cov = analytical_covariance(jacobian_block(ev.spec, ev.model, ev.x), 0.3)
    assert trace(cov.matrix) == pytest.approx(0.09 * frobenius_sq(A), rel=1e-6)


def test_normality_propagates_through_affine_stub(rng):
    A = rng.normal(size=(9, 9))
    ev = make_evaluator(AffineExplainer(A), linear_regressor(np.ones(9)), rng.normal(size=9),
                        INPUT)
    draws = mc_samples(ev, 0.1, 10_000, RngStream(21))
    z = (draws - draws.mean(axis=0)) / draws.std(axis=0)
    skew, kurt = (z ** 3).mean(axis=0), (z ** 4).mean(axis=0) - 3
    assert np.mean((np.abs(skew) <= 0.1) & (np.abs(kurt) <= 0.2)) >= 0.95


def test_forward_difference_truncation_is_first_order(lin, rng):
    x = rng.normal(size=9)
    delta = 1e-3
    J1 = jacobian_block(Square(), lin, x, INPUT, delta).matrix
    J2 = jacobian_block(Square(), lin, x, INPUT, delta / 2).matrix
    # e = x^2 gives a forward difference of 2x + delta: error halves with delta
    np.testing.assert_allclose(np.diag(J1 - J2), delta / 2, rtol=1e-6)
    np.testing.assert_allclose(np.diag(2 * J2 - J1), 2 * x, atol=1e-8)


def test_richardson_on_tabular_occlusion(trained_mlp, auto_mpg):
    x = auto_mpg[1].features[1]
    spec = ExplainerSpec(OCCLUSION)
    J1 = jacobian_block(spec, trained_mlp, x, INPUT, 1e-4).matrix
    J2 = jacobian_block(spec, trained_mlp, x, INPUT, 5e-5).matrix
    scale = np.abs(J1).max()
    assert np.abs(J1 - J2).max() <= 1e-4 * scale + 1e-8
