"""Kernel discriminator built from two centre sets.

With data centres ``d_i`` and previous-generator centres ``g_j``::

    D(x)      = C * p * ( mean_j kappa(x - g_j) - mean_i kappa(x - d_i) )
    grad D(x) = C * p * ( mean_j grad kappa(x - g_j) - mean_i grad kappa(x - d_i) )

where ``C > 0`` is the scale and ``p = kernel.polarity`` (``-1`` for PHS kernels
that grow with distance). Descending ``D`` pulls points towards the data and
pushes them away from the previous generator samples.

Sums over centres are means, so magnitudes do not depend on batch size. Pairs
that coincide under a PHS kernel contribute nothing to derivatives.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..kernels import radial_profile, singular_mask

CHUNK_ELEMS = 2_000_000
# Pairs closer than this (relative to the squared norms) get their distance
# recomputed from the difference vector instead of the Gram expansion.
GRAM_RECHECK = 1e-6
# Up to this dimension distances are summed coordinate by coordinate.
DIRECT_DIM = 4


def as_particles(x, name="particles"):
    p = np.asarray(x, dtype=np.float64)
    if p.ndim == 1:
        p = p[None, :]
    if p.ndim != 2 or p.shape[0] < 1:
        raise ValueError(f"{name} must be a nonempty (N, n) array, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise ValueError(f"{name} has non-finite entries")
    return p


def _chunks(m, n_centers):
    step = max(1, CHUNK_ELEMS // max(1, n_centers))
    for lo in range(0, m, step):
        yield slice(lo, min(m, lo + step))


def pair_distances(x, centers):
    """``|x_m - c_j|`` as an ``(M, N)`` matrix.

    In higher dimensions this uses the Gram expansion, then recomputes
    near-coincident pairs directly so the PHS origin test stays exact.
    """
    if x.shape[1] <= DIRECT_DIM:
        r2 = np.zeros((x.shape[0], centers.shape[0]))
        for k in range(x.shape[1]):
            d = x[:, k, None] - centers[None, :, k]
            d *= d
            r2 += d
        return np.sqrt(r2, out=r2)
    xx = np.einsum("ij,ij->i", x, x)
    cc = np.einsum("ij,ij->i", centers, centers)
    scale = xx[:, None] + cc[None, :]
    r2 = scale - 2.0 * (x @ centers.T)
    close = r2 < GRAM_RECHECK * (scale + 1.0)
    if close.any():
        i, j = np.nonzero(close)
        d = x[i] - centers[j]
        r2[i, j] = np.einsum("ij,ij->i", d, d)
    np.maximum(r2, 0.0, out=r2)
    return np.sqrt(r2)


def _pairs(kernel, x, centers, value=False, second=False):
    r = pair_distances(x, centers)
    phi, s, t = radial_profile(kernel, r, value=value, second=second)
    bad = singular_mask(kernel, r)
    if bad.any():
        s = np.where(bad, 0.0, s)
        if t is not None:
            t = np.where(bad, 0.0, t)
    return phi, s, t


def _check(x, centers):
    if x.shape[-1] != centers.shape[-1]:
        raise ValueError(f"point dimension {x.shape[-1]} does not match centres {centers.shape[-1]}")


def _weighted_diff_sum(w, x, centers):
    # sum_j w_mj (x_m - c_j)
    return w.sum(axis=1)[:, None] * x - w @ centers


def mean_kernel(kernel, x, centers):
    """``mean_j kappa(x_m - c_j)`` for each row of ``x``."""
    _check(x, centers)
    out = np.empty(x.shape[0])
    for sl in _chunks(x.shape[0], centers.shape[0]):
        phi, _, _ = _pairs(kernel, x[sl], centers, value=True)
        out[sl] = phi.mean(axis=1)
    return out


def mean_kernel_grad(kernel, x, centers):
    """``mean_j grad kappa(x_m - c_j)``, shape ``(M, n)``."""
    _check(x, centers)
    out = np.empty_like(x)
    for sl in _chunks(x.shape[0], centers.shape[0]):
        _, s, _ = _pairs(kernel, x[sl], centers)
        out[sl] = _weighted_diff_sum(s, x[sl], centers) / centers.shape[0]
    return out


def flow_residual_and_hvp(kernel, x, data, prev_gen):
    """Residual ``res(x)`` and ``H_res(x) res(x)`` in one pass over the centre pairs.

    Each pair contributes ``s d`` to the residual and ``s v + t (d . v) d`` to
    the Hessian-vector product, with ``d = x - c``.
    """
    _check(x, data)
    _check(x, prev_gen)
    res = np.empty_like(x)
    hres = np.empty_like(x)
    for sl in _chunks(x.shape[0], data.shape[0] + prev_gen.shape[0]):
        xs = x[sl]
        terms = []
        for centers, sign in ((prev_gen, 1.0), (data, -1.0)):
            _, s, t = _pairs(kernel, xs, centers, second=True)
            w = sign / centers.shape[0]
            terms.append((centers, w * s, w * t))
        r = sum(_weighted_diff_sum(s, xs, c) for c, s, _ in terms)
        hr = np.zeros_like(r)
        xr = np.einsum("ij,ij->i", xs, r)
        for c, s, t in terms:
            tu = t * (xr[:, None] - r @ c.T)
            hr += s.sum(axis=1)[:, None] * r + _weighted_diff_sum(tu, xs, c)
        res[sl] = r
        hres[sl] = hr
    return res, hres


@dataclass(frozen=True)
class DiscriminatorField:
    data_centers: np.ndarray
    gen_centers: np.ndarray
    kernel: object
    scale: float = 1.0

    def __post_init__(self):
        d = as_particles(self.data_centers, "data_centers")
        g = as_particles(self.gen_centers, "gen_centers")
        if d.shape[1] != g.shape[1]:
            raise ValueError("data and generator centres must share a dimension")
        if not (np.isfinite(self.scale) and self.scale > 0):
            raise ValueError("scale must be finite and positive")
        object.__setattr__(self, "data_centers", d)
        object.__setattr__(self, "gen_centers", g)
        object.__setattr__(self, "kernel", self.kernel.with_dim(d.shape[1]))

    @property
    def dim(self):
        return self.data_centers.shape[1]

    def _points(self, x):
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        if x.shape[1] != self.dim:
            raise ValueError(f"point dimension {x.shape[1]} does not match field dimension {self.dim}")
        return x, single

    def value(self, x):
        x, single = self._points(x)
        k = self.kernel
        out = mean_kernel(k, x, self.gen_centers) - mean_kernel(k, x, self.data_centers)
        out *= self.scale * k.polarity
        return float(out[0]) if single else out

    def grad(self, x):
        x, single = self._points(x)
        out = self.scale * self.kernel.polarity * _residual(self.kernel, x, self.data_centers, self.gen_centers)
        return out[0] if single else out


def _residual(kernel, x, data, prev_gen):
    return mean_kernel_grad(kernel, x, prev_gen) - mean_kernel_grad(kernel, x, data)


def disc_eval(f, x):
    return f.value(x)


def disc_grad(f, x):
    return f.grad(x)


def flow_residual(kernel, x, data, prev_gen):
    """Push-pull vector ``mean_g grad kappa(x - g) - mean_d grad kappa(x - d)``.

    ``x`` may be one point or a batch. Equals ``kernel.polarity / C`` times the
    discriminator gradient built from the same centres.
    """
    data = as_particles(data, "data")
    prev_gen = as_particles(prev_gen, "prev_gen")
    kernel = kernel.with_dim(data.shape[1])
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    out = _residual(kernel, np.atleast_2d(x), data, prev_gen)
    return out[0] if single else out
