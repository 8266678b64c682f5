"""Evaluation metrics: Gaussian W2, two-sample statistics, mode coverage."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.spatial.distance import cdist

from ._io import write_csv
from .flowcore.field import as_particles
from .kernels import kernel_eval
from .numkit import as_matrix, as_vector, eig_sym, sqrt_spd

W2_NEG_TOL = 1e-9


def _cov(c, n, name):
    c = as_matrix(c, name, square=True)
    if c.shape[0] != n:
        raise ValueError(f"{name} has shape {c.shape}, expected ({n}, {n})")
    return c


def w2_gaussian(mu_d, cov_d, mu_g, cov_g):
    """Squared 2-Wasserstein distance between two Gaussians.

    The cross term uses the symmetric root ``(S_d^1/2 S_g S_d^1/2)^1/2``.
    Round-off negatives down to ``-1e-9`` are clamped to 0.
    """
    mu_d = as_vector(mu_d, "mu_d")
    mu_g = as_vector(mu_g, "mu_g")
    n = mu_d.shape[0]
    if mu_g.shape[0] != n:
        raise ValueError("means differ in dimension")
    cov_d = _cov(cov_d, n, "cov_d")
    cov_g = _cov(cov_g, n, "cov_g")
    root = sqrt_spd(cov_d)
    cross = sqrt_spd(root @ cov_g @ root)
    sqrt_spd(cov_g)  # rejects a non-PSD generator covariance
    dm = mu_d - mu_g
    val = float(dm @ dm + np.trace(cov_d) + np.trace(cov_g) - 2.0 * np.trace(cross))
    if val < -W2_NEG_TOL * max(1.0, float(np.trace(cov_d) + np.trace(cov_g))):
        raise ArithmeticError(f"W2 evaluated to {val}, below round-off tolerance")
    return max(val, 0.0)


class GaussianMoments(NamedTuple):
    mean: np.ndarray
    cov: np.ndarray


def fit_gaussian_moments(p):
    """Sample mean and unbiased covariance, symmetrised with eigenvalues clamped at 0."""
    p = as_particles(p)
    n_pts, n = p.shape
    if n_pts < n + 1:
        raise ValueError(f"need at least {n + 1} points to fit {n}-D moments, got {n_pts}")
    mean = p.mean(axis=0)
    d = p - mean
    cov = d.T @ d / (n_pts - 1)
    cov = 0.5 * (cov + cov.T)
    w, v = eig_sym(cov)
    if w[-1] < 0:
        cov = (v * np.maximum(w, 0.0)) @ v.T
        cov = 0.5 * (cov + cov.T)
    return GaussianMoments(mean, cov)


def w2_from_samples(target, p):
    fit = fit_gaussian_moments(p)
    return w2_gaussian(target.mean, target.cov, fit.mean, fit.cov)


def _pair_sets(a, b):
    a = as_particles(a, "a")
    b = as_particles(b, "b")
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    return a, b


def energy_distance(a, b):
    """``2 E|X-Y| - E|X-X'| - E|Y-Y'|`` averaged over all ordered pairs."""
    a, b = _pair_sets(a, b)
    xy = cdist(a, b).mean()
    xx = cdist(a, a).mean()
    yy = cdist(b, b).mean()
    return max(float(2.0 * xy - xx - yy), 0.0)


def mmd_squared(a, b, kernel):
    """Unbiased U-statistic estimate of the squared MMD for a positive-definite kernel."""
    if not kernel.positive_definite:
        raise ValueError(f"{kernel.kind} kernel is not positive definite; MMD needs rbfg, mog or imq")
    a, b = _pair_sets(a, b)
    if a.shape[0] < 2 or b.shape[0] < 2:
        raise ValueError("each set needs at least two points")

    def gram(u, v):
        return kernel_eval(kernel, u[:, None, :] - v[None, :, :])

    kaa = gram(a, a)
    kbb = gram(b, b)
    na, nb = a.shape[0], b.shape[0]
    taa = (kaa.sum() - np.trace(kaa)) / (na * (na - 1))
    tbb = (kbb.sum() - np.trace(kbb)) / (nb * (nb - 1))
    return float(taa + tbb - 2.0 * gram(a, b).mean())


def mode_coverage(g, p, radius_multiplier=3.0):
    """Fraction of particles whose Mahalanobis-nearest mode is within ``radius_multiplier``."""
    if not radius_multiplier > 0:
        raise ValueError("radius_multiplier must be > 0")
    p = as_particles(p)
    d = np.stack([c.mahalanobis(p) for c in g.components], axis=1)
    nearest = d.argmin(axis=1)
    inside = d[np.arange(p.shape[0]), nearest] <= radius_multiplier
    return np.array([np.mean(inside & (nearest == k)) for k in range(d.shape[1])])


@dataclass
class MetricSeries:
    name: str
    iterations: list = field(default_factory=list)
    values: list = field(default_factory=list)

    def append(self, iteration, value):
        iteration = int(iteration)
        if self.iterations and iteration <= self.iterations[-1]:
            raise ValueError(f"iteration {iteration} does not follow {self.iterations[-1]}")
        self.iterations.append(iteration)
        self.values.append(float(value))

    def __len__(self):
        return len(self.iterations)

    def to_csv(self, path):
        write_csv(path, ["iteration", self.name], zip(self.iterations, self.values))
