"""Radial kernels used by the kernel discriminator: Gaussian (RBFG), mixture of
Gaussians (MoG), inverse multiquadric (IMQ) and polyharmonic splines (PHS).

Every kernel is radial, ``kappa(x) = phi(|x|)``, so its derivatives take the form

    grad kappa(x) = s(r) x
    hess kappa(x) = s(r) I + t(r) x x^T,      t(r) = s'(r) / r

:func:`radial_profile` returns ``(phi, s, t)`` for an array of radii. The batched
field code in :mod:`scoreflow.flowcore` works from these profiles directly and
never materialises per-pair Hessians.

Gradients are exact derivatives of :func:`kernel_eval` by default. Setting
``table_gradients=True`` on a :class:`KernelSpec` switches to the commonly
tabulated forms, which differ from the exact ones by constant prefactors
(1/sigma^2 instead of 2/sigma^2 for Gaussians, a factor 1/2 for IMQ, ``k - 2``
in place of ``k`` for PHS). Hessians always differentiate whichever gradient is
in use.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PHS_EPS = 1e-12
DEFAULT_MOG_SIGMAS = (0.5, 1.0, 2.0, 4.0, 8.0)
KINDS = ("rbfg", "mog", "imq", "phs")


class KernelSingularity(ValueError):
    """Raised when a PHS derivative is requested at the origin."""


@dataclass(frozen=True)
class KernelSpec:
    kind: str
    sigma: float = 1.0
    sigmas: tuple = field(default=DEFAULT_MOG_SIGMAS)
    c: float = 1.0
    k: int | None = None
    dim: int | None = None
    table_gradients: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "rbfg" and not self.sigma > 0:
            raise ValueError("RBFG sigma must be > 0")
        if self.kind == "mog":
            object.__setattr__(self, "sigmas", tuple(float(s) for s in self.sigmas))
            if not self.sigmas or min(self.sigmas) <= 0:
                raise ValueError("MoG needs a nonempty list of positive sigmas")
        if self.kind == "imq" and not self.c > 0:
            raise ValueError("IMQ c must be > 0")
        if self.kind == "phs":
            if self.k is None:
                raise ValueError("PHS needs an explicit exponent k")
            if int(self.k) != self.k:
                raise ValueError("PHS k must be an integer")
            object.__setattr__(self, "k", int(self.k))
            if self.dim is not None:
                if int(self.dim) != self.dim or self.dim < 1:
                    raise ValueError("PHS dim must be a positive integer")
                object.__setattr__(self, "dim", int(self.dim))

    @property
    def log_form(self):
        """True for the ``r^k ln r`` branch of the PHS family (k >= 0, even dim)."""
        if self.kind != "phs":
            return False
        if self.dim is None:
            raise ValueError("PHS kernel has no ambient dimension bound yet")
        return self.k >= 0 and self.dim % 2 == 0

    @property
    def polarity(self):
        """Sign that makes data centres attract under descent of the discriminator.

        Gaussian-type kernels and PHS with k < 0 decay with distance and are
        used as is. PHS with k >= 0 grows with distance and enters the
        discriminator with a negative sign.
        """
        if self.kind == "phs" and self.k >= 0:
            return -1.0
        return 1.0

    @property
    def positive_definite(self):
        return self.kind != "phs"

    def with_dim(self, dim):
        """Copy with the PHS ambient dimension filled in (no-op for other kinds)."""
        if self.kind != "phs":
            return self
        if self.dim is not None and self.dim != dim:
            raise ValueError(f"PHS kernel declared for dim {self.dim}, data has dim {dim}")
        return KernelSpec("phs", k=self.k, dim=dim, table_gradients=self.table_gradients)

    def to_config(self):
        out = {"type": self.kind}
        if self.kind == "rbfg":
            out["sigma"] = self.sigma
        elif self.kind == "mog":
            out["sigmas"] = list(self.sigmas)
        elif self.kind == "imq":
            out["c"] = self.c
        else:
            out["k"] = self.k
            if self.dim is not None:
                out["dim"] = self.dim
        if self.table_gradients:
            out["table_gradients"] = True
        return out

    @classmethod
    def from_config(cls, cfg, dim=None):
        cfg = dict(cfg)
        kind = cfg.pop("type", None)
        table = bool(cfg.pop("table_gradients", False))
        if kind == "rbfg":
            spec = cls("rbfg", sigma=float(cfg.pop("sigma", 1.0)), table_gradients=table)
        elif kind == "mog":
            spec = cls("mog", sigmas=tuple(cfg.pop("sigmas", DEFAULT_MOG_SIGMAS)), table_gradients=table)
        elif kind == "imq":
            spec = cls("imq", c=float(cfg.pop("c", 1.0)), table_gradients=table)
        elif kind == "phs":
            if "k" not in cfg:
                raise ValueError("PHS kernel config requires an explicit 'k'")
            spec_dim = cfg.pop("dim", dim)
            if dim is not None and spec_dim != dim:
                raise ValueError(f"PHS kernel declared for dim {spec_dim}, data has dim {dim}")
            spec = cls("phs", k=cfg.pop("k"), dim=spec_dim, table_gradients=table)
        else:
            raise ValueError(f"unknown kernel type {kind!r}; expected one of {KINDS}")
        if cfg:
            raise ValueError(f"unknown kernel keys {sorted(cfg)}")
        return spec


def rbfg(sigma=1.0, **kw):
    return KernelSpec("rbfg", sigma=sigma, **kw)


def mog(sigmas=DEFAULT_MOG_SIGMAS, **kw):
    return KernelSpec("mog", sigmas=tuple(sigmas), **kw)


def imq(c=1.0, **kw):
    return KernelSpec("imq", c=c, **kw)


def phs(k, dim, **kw):
    return KernelSpec("phs", k=k, dim=dim, **kw)


def phs_default_exponent(m, n):
    """Exponent ``k = 2m - n`` of the order-``m`` polyharmonic spline in ``n`` dimensions."""
    if m < 1 or n < 1:
        raise ValueError("order and dimension must be >= 1")
    return 2 * m - n


def _gauss_profile(sigma, r2, table):
    e = np.exp(-r2 / sigma**2)
    a = 1.0 if table else 2.0
    return e, -(a / sigma**2) * e, (2.0 * a / sigma**4) * e


def _ipow(r, e):
    """``r**e`` for an integer ``e``, using multiplications for small exponents."""
    e = int(e)
    if e == 0:
        return np.ones_like(r)
    if e == 1:
        return r
    if e == 2:
        return r * r
    if e == -1:
        return 1.0 / r
    if e == -2:
        return 1.0 / (r * r)
    if e == -3:
        return 1.0 / (r * r * r)
    return r ** float(e)


def radial_profile(spec, r, value=True, second=True):
    """Return ``(phi, s, t)`` at radii ``r`` (any shape).

    With ``value=False`` the kernel value is skipped and ``phi`` is ``None``;
    ``second=False`` likewise skips ``t`` for PHS kernels.
    For PHS, radii below ``PHS_EPS`` are replaced by ``sqrt(r^2 + eps^2)``;
    callers decide what to do with the derivative terms there (see
    :func:`singular_mask`).
    """
    r = np.asarray(r, dtype=np.float64)
    table = spec.table_gradients
    if spec.kind == "rbfg":
        return _gauss_profile(spec.sigma, r * r, table)
    if spec.kind == "mog":
        r2 = r * r
        phi = np.zeros_like(r)
        s = np.zeros_like(r)
        t = np.zeros_like(r)
        for sigma in spec.sigmas:
            p, ds, dt = _gauss_profile(sigma, r2, table)
            phi += p
            s += ds
            t += dt
        return phi, s, t
    if spec.kind == "imq":
        q = r * r + spec.c
        a = 0.5 if table else 1.0
        inv = 1.0 / q
        root = np.sqrt(inv)
        return root, -a * root * inv, 3.0 * a * root * inv * inv
    k = spec.k
    tiny = r < PHS_EPS
    if tiny.any():
        r = np.where(tiny, np.sqrt(r * r + PHS_EPS**2), r)
    phi = t = None
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        if spec.log_form:
            # ln r drops out of the exact first derivative when k = 0
            lr = np.log(r) if (value or second or table or k != 0) else 0.0
            if value:
                phi = _ipow(r, k) * lr
            rk2 = _ipow(r, k - 2)
            if table:
                s = rk2 * ((k - 2) * lr + 1.0)
                if second:
                    t = (k - 2) * rk2 / (r * r) * ((k - 2) * lr + 2.0)
            else:
                s = rk2 * (k * lr + 1.0)
                if second:
                    t = rk2 / (r * r) * ((k - 2) * (k * lr + 1.0) + k)
        else:
            if value:
                phi = _ipow(r, k)
            a = float(k - 2) if table else float(k)
            rk2 = _ipow(r, k - 2)
            s = a * rk2
            if second:
                t = a * (k - 2) * rk2 / (r * r)
    return phi, s, t


def singular_mask(spec, r):
    """Boolean mask of radii at which a PHS kernel's derivatives are dropped."""
    if spec.kind != "phs":
        return np.zeros(np.shape(r), dtype=bool)
    return np.asarray(r) < PHS_EPS


def _radius(x):
    return np.sqrt(np.sum(x * x, axis=-1))


def kernel_eval(spec, x):
    """Kernel value at ``x``; ``x`` may be a single point or a batch ``(..., n)``."""
    x = np.asarray(x, dtype=np.float64)
    phi, _, _ = radial_profile(spec, _radius(x))
    return phi if phi.ndim else float(phi)


def kernel_grad(spec, x, return_flag=False):
    """Gradient ``s(|x|) x``. At a PHS origin the zero vector is returned and,
    with ``return_flag=True``, the singularity flag is set."""
    x = np.asarray(x, dtype=np.float64)
    r = _radius(x)
    _, s, _ = radial_profile(spec, r)
    bad = singular_mask(spec, r)
    s = np.where(bad, 0.0, s)
    g = s[..., None] * x
    if return_flag:
        return g, bad if np.ndim(bad) else bool(bad)
    return g


def kernel_hessian(spec, x):
    """Hessian ``s I + t x x^T`` at a single point or a batch ``(..., n)``."""
    x = np.asarray(x, dtype=np.float64)
    r = _radius(x)
    if np.any(singular_mask(spec, r)):
        raise KernelSingularity("PHS Hessian is undefined at the origin")
    _, s, t = radial_profile(spec, r)
    n = x.shape[-1]
    h = t[..., None, None] * (x[..., :, None] * x[..., None, :])
    h = h + s[..., None, None] * np.eye(n)
    return h


def kernel_grad_fd(spec, x, h=1e-6):
    """Central-difference gradient of :func:`kernel_eval` (test oracle)."""
    if not h > 0:
        raise ValueError("step must be positive")
    x = np.asarray(x, dtype=np.float64)
    g = np.empty_like(x)
    for i in range(x.shape[-1]):
        e = np.zeros_like(x)
        e[..., i] = h
        g[..., i] = (kernel_eval(spec, x + e) - kernel_eval(spec, x - e)) / (2 * h)
    return g
