"""Dense linear algebra helpers and a bit-exact deterministic PRNG.

Matrices and vectors are plain float64 numpy arrays. The helpers here add the
shape checks and the few algorithms (Gauss-Jordan inversion, power iteration)
that the rest of the package relies on having a fixed, known behaviour.
"""
from __future__ import annotations

import math

import numpy as np

MASK64 = (1 << 64) - 1
SINGULAR_PIVOT = 1e-12


class DimensionError(ValueError):
    pass


class SingularMatrixError(ArithmeticError):
    pass


def as_matrix(a) -> np.ndarray:
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionError(f"expected a 2-d matrix, got shape {m.shape}")
    return m


def as_vector(x) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionError(f"expected a 1-d vector, got shape {v.shape}")
    return v


def mat_vec(a, x) -> np.ndarray:
    a, x = as_matrix(a), as_vector(x)
    if a.shape[1] != x.shape[0]:
        raise DimensionError(f"cannot multiply {a.shape} matrix by length-{x.shape[0]} vector")
    return a @ x


def outer(u, v) -> np.ndarray:
    return np.outer(as_vector(u), as_vector(v))


def trace(a) -> float:
    a = as_matrix(a)
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"trace of non-square matrix {a.shape}")
    return float(np.trace(a))


def invert(a) -> np.ndarray:
    """Gauss-Jordan inverse with partial pivoting.

    Raises SingularMatrixError when the best available pivot falls below 1e-12
    in magnitude.
    """
    a = as_matrix(a)
    n = a.shape[0]
    if n != a.shape[1]:
        raise DimensionError(f"cannot invert non-square matrix {a.shape}")
    aug = np.hstack([a.copy(), np.eye(n)])
    for col in range(n):
        pivot_row = col + int(np.argmax(np.abs(aug[col:, col])))
        pivot = aug[pivot_row, col]
        if abs(pivot) < SINGULAR_PIVOT:
            raise SingularMatrixError(f"pivot {pivot:.3e} in column {col}")
        if pivot_row != col:
            aug[[col, pivot_row]] = aug[[pivot_row, col]]
        aug[col] /= pivot
        factors = aug[:, col].copy()
        factors[col] = 0.0
        aug -= np.outer(factors, aug[col])
    return aug[:, n:]


def _start_vector(n: int) -> np.ndarray:
    # fixed, structureless start so no eigenvector is systematically missed
    rng = DetRng(0x5EED5EED)
    v = np.array([0.5 + rng.uniform() for _ in range(n)])
    return v / np.linalg.norm(v)


def max_eigenvalue(a, iters: int = 10000, tol: float = 1e-13) -> float:
    """Dominant eigenvalue of a symmetric PSD matrix by power iteration.

    Stops when the relative change of the Rayleigh quotient drops below
    `tol` or after `iters` multiplications. The zero matrix gives 0.
    """
    a = as_matrix(a)
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"eigenvalue of non-square matrix {a.shape}")
    v = _start_vector(a.shape[0])
    rayleigh = float(v @ a @ v)
    for _ in range(iters):
        w = a @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
        updated = float(v @ a @ v)
        if abs(updated - rayleigh) <= tol * abs(updated):
            return updated
        rayleigh = updated
    return rayleigh


class DetRng:
    """splitmix64 generator; the same seed gives the same stream everywhere."""

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def uniform(self) -> float:
        """Uniform double in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def gaussian(self) -> float:
        """Standard normal via Box-Muller (cosine branch only)."""
        u1 = 1.0 - self.uniform()
        u2 = self.uniform()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


def rng_permutation(rng: DetRng, n: int) -> np.ndarray:
    """Fisher-Yates shuffle of range(n); step i (descending) swaps with z mod (i+1)."""
    if n < 1:
        raise ValueError("permutation length must be >= 1")
    perm = list(range(n))
    for i in range(n - 1, 0, -1):
        j = rng.next_u64() % (i + 1)
        perm[i], perm[j] = perm[j], perm[i]
    return np.array(perm, dtype=np.int64)
