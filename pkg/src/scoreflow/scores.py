"""Analytic target densities and their scores, plus coefficient diagnostics.

Targets expose a small duck-typed interface used throughout the package:
``dim``, ``logpdf(x)``, ``score(x)``, ``score_jacobian(x)`` (the Hessian of the
log-density) and ``sample(rng, n)``. Any object with ``score`` can stand in as
the data score, e.g. a learned model.
"""

from __future__ import annotations

import enum
import math

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import logsumexp

from .numkit import as_matrix, as_vector, eig_sym

LOG_2PI = math.log(2.0 * math.pi)


def _as_points(x, dim):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != dim:
        raise ValueError(f"expected points of dimension {dim}, got shape {x.shape}")
    return x


class GaussianSpec:
    """Multivariate normal ``N(mean, cov)`` with the covariance factorised once."""

    def __init__(self, mean, cov):
        self.mean = as_vector(mean, "mean")
        n = self.mean.shape[0]
        cov = np.asarray(cov, dtype=np.float64)
        if cov.ndim == 0:
            cov = float(cov) * np.eye(n)
        elif cov.ndim == 1:
            cov = np.diag(cov)
        self.cov = as_matrix(cov, "cov", square=True)
        if self.cov.shape[0] != n:
            raise ValueError("mean and covariance dimensions differ")
        w, _ = eig_sym(self.cov)
        if w[-1] <= 0:
            raise ValueError("covariance must be positive definite")
        self._chol = cho_factor(self.cov, lower=True)
        self.precision = cho_solve(self._chol, np.eye(n))
        self.precision = 0.5 * (self.precision + self.precision.T)
        self.logdet = 2.0 * float(np.sum(np.log(np.diag(self._chol[0]))))
        self._sqrt = np.linalg.cholesky(self.cov)

    @property
    def dim(self):
        return self.mean.shape[0]

    @classmethod
    def standard(cls, n):
        return cls(np.zeros(n), np.eye(n))

    def logpdf(self, x):
        x = _as_points(x, self.dim)
        d = x - self.mean
        maha = np.einsum("...i,ij,...j->...", d, self.precision, d)
        out = -0.5 * (self.dim * LOG_2PI + self.logdet + maha)
        return out if out.ndim else float(out)

    def score(self, x):
        x = _as_points(x, self.dim)
        return -(x - self.mean) @ self.precision

    def score_jacobian(self, x):
        x = _as_points(x, self.dim)
        return np.broadcast_to(-self.precision, x.shape[:-1] + (self.dim, self.dim)).copy()

    def mahalanobis(self, x):
        d = _as_points(x, self.dim) - self.mean
        return np.sqrt(np.einsum("...i,ij,...j->...", d, self.precision, d))

    def sample(self, rng, n):
        return self.mean + rng.normal((n, self.dim)) @ self._sqrt.T

    def to_config(self):
        return {"type": "gaussian", "mean": self.mean.tolist(), "cov": self.cov.tolist()}


class GmmSpec:
    """Gaussian mixture; responsibilities are computed in log space."""

    def __init__(self, weights, components):
        w = as_vector(weights, "weights")
        if len(components) < 1 or len(components) != w.shape[0]:
            raise ValueError("need one weight per component and at least one component")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be positive and sum to 1")
        dims = {c.dim for c in components}
        if len(dims) != 1:
            raise ValueError("components must share a dimension")
        self.weights = w
        self.components = list(components)
        self._logw = np.log(w)

    @property
    def dim(self):
        return self.components[0].dim

    def _component_logpdfs(self, x):
        return np.stack([c.logpdf(x) for c in self.components], axis=-1) + self._logw

    def responsibilities(self, x):
        lp = np.asarray(self._component_logpdfs(x))
        return np.exp(lp - logsumexp(lp, axis=-1, keepdims=True))

    def logpdf(self, x):
        x = _as_points(x, self.dim)
        out = logsumexp(np.asarray(self._component_logpdfs(x)), axis=-1)
        return out if np.ndim(out) else float(out)

    def score(self, x):
        x = _as_points(x, self.dim)
        resp = self.responsibilities(x)
        scores = np.stack([c.score(x) for c in self.components], axis=-2)
        return np.einsum("...k,...ki->...i", resp, scores)

    def score_jacobian(self, x):
        x = _as_points(x, self.dim)
        resp = self.responsibilities(x)
        scores = np.stack([c.score(x) for c in self.components], axis=-2)
        mix = np.einsum("...k,...ki->...i", resp, scores)
        prec = np.stack([c.precision for c in self.components])
        second = np.einsum("...k,...ki,...kj->...ij", resp, scores, scores)
        return second - np.einsum("...k,kij->...ij", resp, prec) - mix[..., :, None] * mix[..., None, :]

    def sample(self, rng, n):
        counts = np.bincount(
            rng.generator.choice(len(self.components), size=n, p=self.weights),
            minlength=len(self.components),
        )
        pts = np.concatenate([c.sample(rng, m) for c, m in zip(self.components, counts)])
        return pts[rng.generator.permutation(n)]

    def to_config(self):
        return {
            "type": "gmm",
            "weights": self.weights.tolist(),
            "components": [
                {"mean": c.mean.tolist(), "cov": c.cov.tolist()} for c in self.components
            ],
        }


def gaussian_logpdf(g, x):
    return g.logpdf(x)


def gaussian_score(g, x):
    return g.score(x)


def gmm_score(g, x):
    return g.score(x)


def target_from_config(cfg):
    """Build a Gaussian or mixture target from ``{"type": ..., ...}``.

    ``cov`` may be a scalar (isotropic), a list (diagonal) or a nested list.
    """
    kind = cfg.get("type")
    if kind == "gaussian":
        return GaussianSpec(cfg["mean"], cfg.get("cov", 1.0))
    if kind == "gmm":
        comps = [GaussianSpec(c["mean"], c.get("cov", 1.0)) for c in cfg["components"]]
        return GmmSpec(cfg["weights"], comps)
    raise ValueError(f"unknown target type {kind!r}")


def fisher_divergence(score_a, score_b, samples):
    """Half the mean squared distance between two score fields over ``samples``."""
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("need a nonempty (N, n) sample array")
    d = np.asarray(score_a(x)) - np.asarray(score_b(x))
    return 0.5 * float(np.mean(np.sum(d * d, axis=-1)))


class DivergenceKind(enum.Enum):
    KL = "kl"
    REVERSE_KL = "reverse_kl"
    PEARSON_CHI2 = "pearson_chi2"
    SQUARED_HELLINGER = "squared_hellinger"
    SGAN = "sgan"


def fgan_coefficient(kind, r):
    """Coefficient weighting the score-matching condition of an f-GAN generator,
    as a function of the density ratio ``r = p_data / p_prev``."""
    kind = DivergenceKind(kind)
    r = float(r)
    if not r > 0:
        raise ValueError("density ratio must be > 0")
    if kind is DivergenceKind.KL:
        return r
    if kind is DivergenceKind.REVERSE_KL:
        return 1.0
    if kind is DivergenceKind.PEARSON_CHI2:
        return 2.0 * r * r
    if kind is DivergenceKind.SQUARED_HELLINGER:
        return 0.5 * math.sqrt(r)
    return r * r / (r + 1.0)


def lsgan_coefficient(a, b, c, p_prev, p_data):
    """Least-squares GAN coefficient for class labels ``(a, b, c)``."""
    total = p_prev + p_data
    if not total > 0:
        raise ValueError("p_prev and p_data cannot both be zero")
    return (b - a) * ((a - c) * p_prev + (b - c) * p_data) / total**3
