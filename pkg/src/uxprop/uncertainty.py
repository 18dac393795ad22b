"""Propagation of Gaussian input/weight noise into explanations.

Two estimators of the explanation covariance are provided:

* analytical: ``sigma**2 * J @ J.T`` with ``J`` a forward-difference Jacobian
  of the explanation w.r.t. the perturbed quantity;
* Monte Carlo: the sample covariance of explanations at ``N`` perturbed
  points.

Both are summarised by the mean uncertainty in the explanation,
``MUE = trace(cov) / (m * ||e||^2)``.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import linalg
from .explainers import resolve_target
from .nn.model import get_final_dense_weights, set_final_dense_weights

INPUT = "Input"
FINAL_DENSE_WEIGHTS = "FinalDenseWeights"
TARGET_KINDS = (INPUT, FINAL_DENSE_WEIGHTS)
ANALYTICAL = "Analytical"
MONTE_CARLO = "MonteCarlo"

DEFAULT_DELTA = 1e-4
DEGENERATE_NORM_SQ = 1e-12
_PROBE_CHUNK = 64


class DegenerateReferenceError(ValueError):
    """The unperturbed explanation is (numerically) zero, so MUE is undefined."""


@dataclass(frozen=True)
class PerturbationTarget:
    kind: str
    dimension: int

    def __post_init__(self):
        if self.kind not in TARGET_KINDS:
            raise ValueError(f"unknown perturbation target {self.kind!r}")
        if self.dimension < 1:
            raise ValueError("perturbation dimension must be positive")

    @classmethod
    def for_model(cls, kind, model):
        dim = model.n_inputs if kind == INPUT else model.final_dense_weight_count
        return cls(kind, dim)


@dataclass(frozen=True)
class JacobianBlock:
    matrix: np.ndarray
    target: PerturbationTarget
    delta: float
    explainer: str = ""
    sample_id: Optional[int] = None

    @property
    def shape(self):
        return self.matrix.shape


@dataclass(frozen=True)
class CovarianceEstimate:
    sigma: float
    matrix: np.ndarray
    estimator: str
    n_samples: Optional[int] = None
    seed: Optional[int] = None

    @property
    def trace(self):
        return linalg.trace(self.matrix)


@dataclass(frozen=True)
class MueRecord:
    dataset: str
    sample_id: int
    explainer: str
    target: str
    sigma: float
    mue_lin: float
    mue_mc: float
    n_mc: int
    m: int
    ref_norm_sq: float
    flag: str = ""

    @property
    def flagged(self):
        return bool(self.flag)


@dataclass
class Evaluator:
    """Explanations of one explainer/model/sample under a given perturbation kind.

    ``evaluate(points)`` maps a stack of perturbed points (inputs or final-layer
    weight vectors) to a stack of explanations, always holding the explained
    output index fixed at ``target``.
    """

    spec: object
    model: object
    x: np.ndarray
    kind: str
    target: int
    workers: int = 1
    origin: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.kind not in TARGET_KINDS:
            raise ValueError(f"unknown perturbation target {self.kind!r}")
        self.x = np.asarray(self.x, dtype=np.float64).ravel()
        self.origin = self.x if self.kind == INPUT else get_final_dense_weights(self.model)

    @property
    def dimension(self):
        return self.origin.size

    def _chunk(self, points):
        if self.kind == INPUT:
            return np.asarray(self.spec.batch(self.model, points, self.target))
        rows = [self.spec.batch(set_final_dense_weights(self.model, w), self.x[None],
                                self.target)[0] for w in points]
        return np.asarray(rows)

    def evaluate(self, points):
        points = np.asarray(points, dtype=np.float64).reshape(-1, self.dimension)
        size = _PROBE_CHUNK if self.kind == INPUT else 1
        chunks = [points[i:i + size] for i in range(0, len(points), size)]
        if self.workers > 1 and len(chunks) > 1:
            with ThreadPoolExecutor(self.workers) as pool:
                out = list(pool.map(self._chunk, chunks))
        else:
            out = [self._chunk(c) for c in chunks]
        return np.concatenate(out)

    def reference(self):
        return self.evaluate(self.origin[None])[0]

    def slot_reference(self, count):
        """The reference explanation as :meth:`evaluate` would compute it in each
        of ``count`` batch slots."""
        size = _PROBE_CHUNK if self.kind == INPUT else 1
        full, tail = divmod(count, size)
        parts = []
        if full:
            block = self._chunk(np.repeat(self.origin[None], size, axis=0))
            parts.extend([block] * full)
        if tail:
            parts.append(self._chunk(np.repeat(self.origin[None], tail, axis=0)))
        return np.concatenate(parts)


def make_evaluator(spec, model, x, kind, target=None, workers=1):
    if target is None:
        target = resolve_target(spec, model, np.asarray(x).reshape(model.input_shape))
    return Evaluator(spec, model, x, kind, target, workers)


def _check_finite(values, what):
    bad = ~np.all(np.isfinite(values), axis=1)
    if bad.any():
        raise FloatingPointError(f"non-finite explanation at {what} {int(np.argmax(bad))}")


def jacobian_from_evaluator(ev, delta=DEFAULT_DELTA, sample_id=None):
    if not delta > 0:
        raise ValueError("delta must be positive")
    d = ev.dimension
    probes = np.repeat(ev.origin[None], d, axis=0)
    probes[np.arange(d), np.arange(d)] += delta
    values = ev.evaluate(probes)
    _check_finite(values, "coordinate")
    # Batched kernels may round differently by row position, so each probe is
    # differenced against the reference evaluated in the same batch slot.
    J = (values - ev.slot_reference(d)).T / delta
    target = PerturbationTarget(ev.kind, d)
    return JacobianBlock(J, target, float(delta), getattr(ev.spec, "name", ""), sample_id)


def jacobian_block(spec, model, x, target=INPUT, delta=DEFAULT_DELTA, sample_id=None,
                   class_index=None, workers=1):
    """Forward-difference Jacobian of the explanation w.r.t. inputs or final weights."""
    kind = target.kind if isinstance(target, PerturbationTarget) else target
    ev = make_evaluator(spec, model, x, kind, class_index, workers)
    return jacobian_from_evaluator(ev, delta, sample_id=sample_id)


def analytical_covariance(J, sigma):
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    matrix = J.matrix if isinstance(J, JacobianBlock) else np.asarray(J, dtype=np.float64)
    return CovarianceEstimate(float(sigma), sigma ** 2 * linalg.matmul_transposed(matrix),
                              ANALYTICAL)


def mc_samples(ev, sigma, n, rng):
    """``n`` explanations at points perturbed by N(0, sigma^2 I); one substream per draw."""
    if n < 2:
        raise ValueError("Monte Carlo needs N >= 2 draws")
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0:
        # every draw is the unperturbed point; avoid batch-position rounding
        return np.repeat(ev.reference()[None], n, axis=0)
    noise = np.stack([linalg.sample_gaussian(ev.dimension, sigma, rng.child(k))
                      for k in range(n)])
    values = ev.evaluate(ev.origin + noise)
    _check_finite(values, "draw")
    return values


def mc_covariance_from_evaluator(ev, sigma, n, rng):
    samples = mc_samples(ev, sigma, n, rng)
    return CovarianceEstimate(float(sigma), linalg.empirical_covariance(samples), MONTE_CARLO,
                              n, rng.seed)


def mc_covariance(spec, model, x, target, sigma, n, rng, class_index=None, workers=1):
    kind = target.kind if isinstance(target, PerturbationTarget) else target
    ev = make_evaluator(spec, model, x, kind, class_index, workers)
    return mc_covariance_from_evaluator(ev, sigma, n, rng)


def _reference_values(reference):
    return np.asarray(getattr(reference, "values", reference), dtype=np.float64).ravel()


def reference_norm_sq(reference):
    e = _reference_values(reference)
    norm_sq = float(e @ e)
    if norm_sq < DEGENERATE_NORM_SQ:
        raise DegenerateReferenceError(
            f"reference explanation has squared norm {norm_sq:.3g} < {DEGENERATE_NORM_SQ}"
        )
    return norm_sq


def mue(cov, reference):
    """trace(cov) / (m * ||reference||^2)."""
    matrix = cov.matrix if isinstance(cov, CovarianceEstimate) else np.asarray(cov)
    e = _reference_values(reference)
    if matrix.shape != (e.size, e.size):
        raise ValueError(f"covariance {matrix.shape} does not match reference length {e.size}")
    return linalg.trace(matrix) / (e.size * reference_norm_sq(e))


def mue_curve_analytical(J, reference, sigmas):
    """``[(sigma, mue_lin)]`` from a single Jacobian via the Frobenius identity."""
    matrix = J.matrix if isinstance(J, JacobianBlock) else np.asarray(J)
    e = _reference_values(reference)
    scale = linalg.frobenius_sq(matrix) / (e.size * reference_norm_sq(e))
    return [(float(s), float(float(s) ** 2 * scale)) for s in sigmas]


def uxai(spec, model, x, kind, sigmas, n, delta, rng, sample_id=0, dataset="",
         class_index=None, workers=1, on_jacobian=None):
    """Analytical and Monte Carlo MUE for every sigma, one record each.

    The reference explanation is computed once and shared by both estimators.
    Sigma ``j`` draws from ``rng.child(j)``. ``on_jacobian(J, reference)`` is
    called once the Jacobian is known, for callers that want more than MUEs.
    """
    sigmas = [float(s) for s in sigmas]
    if not sigmas:
        return []
    ev = make_evaluator(spec, model, x, kind, class_index, workers)
    ref = ev.reference()
    if not np.all(np.isfinite(ref)):
        raise FloatingPointError(f"{getattr(spec, 'name', '')} reference explanation is not finite")
    norm_sq = reference_norm_sq(ref)
    J = jacobian_from_evaluator(ev, delta, sample_id=sample_id)
    if on_jacobian is not None:
        on_jacobian(J, ref)
    curve = mue_curve_analytical(J, ref, sigmas)
    name = getattr(spec, "name", "")
    records = []
    for j, (sigma, lin) in enumerate(curve):
        try:
            cov = mc_covariance_from_evaluator(ev, sigma, n, rng.child(j))
        except Exception as exc:
            raise RuntimeError(f"{name} sample {sample_id} sigma={sigma:g}: {exc}") from exc
        mc = float(linalg.trace(cov.matrix) / (ref.size * norm_sq))
        records.append(MueRecord(dataset, int(sample_id), name, kind, sigma, lin, mc, int(n),
                                 int(ref.size), norm_sq))
    return records


def uxai_input(spec, model, x, sigmas, n=100, delta=DEFAULT_DELTA, rng=None, **kwargs):
    rng = rng if rng is not None else linalg.RngStream(0)
    return uxai(spec, model, x, INPUT, sigmas, n, delta, rng, **kwargs)


def uxai_weights(spec, model, x, sigmas, n=100, delta=DEFAULT_DELTA, rng=None, **kwargs):
    rng = rng if rng is not None else linalg.RngStream(0)
    return uxai(spec, model, x, FINAL_DENSE_WEIGHTS, sigmas, n, delta, rng, **kwargs)
