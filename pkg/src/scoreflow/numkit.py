"""Dense linear algebra helpers and seeded randomness.

Vectors and matrices are plain ``float64`` numpy arrays. The wrappers here add
the shape/finiteness checks and error types the rest of the package relies on;
the heavy lifting is LAPACK through ``numpy.linalg``.
"""

from __future__ import annotations

import math
import warnings

import numpy as np

SINGULAR_LOGDET = math.log(1e-300)
COND_WARN = 1e12
SYM_TOL = 1e-12
PSD_CLAMP = -1e-10
PSD_FAIL = -1e-6


class SingularMatrixError(np.linalg.LinAlgError):
    def __init__(self, message, cond=math.inf):
        super().__init__(message)
        self.cond = cond


class NotPSDError(ValueError):
    pass


def as_vector(x, name="vector"):
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} has non-finite entries")
    return v


def as_matrix(m, name="matrix", square=False):
    a = np.asarray(m, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {a.shape}")
    if square and a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


def lu_logabsdet(m):
    """Return ``(log|det m|, sign)`` with ``sign`` in {-1, 0, +1}.

    A singular matrix gives ``(-inf, 0)``.
    """
    a = as_matrix(m, square=True)
    sign, logabs = np.linalg.slogdet(a)
    if sign == 0 or not np.isfinite(logabs):
        return -math.inf, 0
    return float(logabs), int(sign)


def solve(m, rhs):
    """Solve ``m @ x = rhs``; ``rhs`` may be a vector or a matrix of columns."""
    a = as_matrix(m, square=True)
    b = np.asarray(rhs, dtype=np.float64)
    if b.shape[0] != a.shape[0]:
        raise ValueError(f"rhs has leading size {b.shape[0]}, matrix is {a.shape}")
    logabs, sign = lu_logabsdet(a)
    if sign == 0 or logabs < SINGULAR_LOGDET:
        raise SingularMatrixError(
            f"matrix is singular (log|det| = {logabs})", cond=float(np.linalg.cond(a))
        )
    cond = float(np.linalg.cond(a))
    if cond > COND_WARN:
        warnings.warn(f"ill-conditioned solve, cond = {cond:.3g}", RuntimeWarning, stacklevel=2)
    return np.linalg.solve(a, b)


def _check_symmetric(a):
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    if np.max(np.abs(a - a.T), initial=0.0) > SYM_TOL * scale:
        raise ValueError("matrix is not symmetric")


def eig_sym(m):
    """Eigen-decomposition of a symmetric matrix, eigenvalues in descending order.

    Returns ``(eigenvalues, V)`` with ``m = V @ diag(eigenvalues) @ V.T``.
    """
    a = as_matrix(m, square=True)
    _check_symmetric(a)
    w, v = np.linalg.eigh(0.5 * (a + a.T))
    order = np.argsort(w)[::-1]
    return w[order], v[:, order]


def sqrt_spd(m):
    """Symmetric PSD square root; eigenvalues in [-1e-6, -1e-10) are an error only below -1e-6."""
    w, v = eig_sym(m)
    scale = max(1.0, float(np.max(np.abs(w)))) if w.size else 1.0
    if w.size and w.min() < PSD_FAIL * scale:
        raise NotPSDError(f"matrix is not PSD (min eigenvalue {w.min():.3g})")
    w = np.clip(w, 0.0, None)
    root = (v * np.sqrt(w)) @ v.T
    return 0.5 * (root + root.T)


def pinv(m):
    """Moore-Penrose pseudoinverse."""
    return np.linalg.pinv(as_matrix(m))


class SeededPrng:
    """Reproducible random stream.

    Backed by numpy's PCG64 bit generator; normals come from the ziggurat
    transform in ``numpy.random.Generator``, which is platform independent, so
    a given seed produces the same stream everywhere.
    """

    def __init__(self, seed):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    @property
    def generator(self):
        return self._gen

    def normal(self, size):
        return self._gen.standard_normal(size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size)

    def choice(self, n, size, replace=False):
        return self._gen.choice(n, size=size, replace=replace)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size=size)

    def spawn(self, key):
        """Independent child stream derived from this seed and an integer key."""
        return SeededPrng(np.random.SeedSequence([self.seed, int(key)]).generate_state(1)[0])


def sample_std_normal(rng, n):
    if n < 1:
        raise ValueError("n must be >= 1")
    return rng.normal(int(n))
