"""Dense float64 arithmetic, seeded Gaussian sampling and covariance helpers.

Tensors and matrices are plain ``numpy.ndarray`` objects of dtype float64.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RngStream:
    """A reproducible random stream addressed by ``(seed, stream_id)``.

    Parallel callers never share a generator; they derive substreams with
    :meth:`child`, so the draws depend only on indices and not on scheduling.
    """

    seed: int
    stream_id: int = 0

    def generator(self):
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.Philox(seq))

    def child(self, index):
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id, int(index)))
        lo, hi = seq.generate_state(2, np.uint32)
        return RngStream(self.seed, (int(hi) << 32) | int(lo))


def as_float_array(a, name="array"):
    arr = np.asarray(a, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def sample_gaussian(dim, sigma, rng, size=None):
    """Draw ``dim`` i.i.d. N(0, sigma^2) values (or ``size`` rows of them)."""
    if dim <= 0:
        raise ValueError("dim must be positive")
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    shape = (dim,) if size is None else (size, dim)
    if sigma == 0:
        return np.zeros(shape)
    return sigma * rng.generator().standard_normal(shape)


def empirical_covariance(samples):
    """Unbiased (divisor N-1) covariance of N sample vectors, exactly symmetric."""
    if isinstance(samples, np.ndarray):
        X = np.asarray(samples, dtype=np.float64)
        if X.ndim != 2:
            raise ValueError("samples must be a 2-D array of shape (N, m)")
    else:
        rows = [np.asarray(s, dtype=np.float64).ravel() for s in samples]
        if len({r.size for r in rows}) > 1:
            raise ValueError("all samples must have the same length")
        X = np.stack(rows) if rows else np.empty((0, 0))
    n = X.shape[0]
    if n < 2:
        raise ValueError("need at least 2 samples for a covariance estimate")
    # Sorting rows makes the result independent of sample order, bit for bit.
    X = X[np.lexsort(X.T[::-1])]
    # Shifting by one sample first keeps constant data exactly at zero.
    D = X - X[0]
    centered = D - D.mean(axis=0)
    return symmetrize(centered.T @ centered) / (n - 1)


def symmetrize(C):
    C = np.asarray(C, dtype=np.float64)
    return 0.5 * (C + C.T)


def trace(M):
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"trace needs a square matrix, got shape {M.shape}")
    return float(np.trace(M))


def matmul(A, B):
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[0]:
        raise ValueError(f"cannot multiply shapes {A.shape} and {B.shape}")
    return A @ B


def matmul_transposed(A):
    """A @ A.T, returned exactly symmetric."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {A.shape}")
    return symmetrize(A @ A.T)


def frobenius_sq(A):
    A = np.asarray(A, dtype=np.float64)
    return float(np.sum(A * A))


def min_eigenvalue(C):
    return float(np.linalg.eigvalsh(np.asarray(C, dtype=np.float64)).min())


def is_covariance(C, rtol=1e-9):
    C = np.asarray(C, dtype=np.float64)
    if C.ndim != 2 or C.shape[0] != C.shape[1] or not np.array_equal(C, C.T):
        return False
    tr = abs(float(np.trace(C)))
    return min_eigenvalue(C) >= -rtol * max(tr, 1.0)
