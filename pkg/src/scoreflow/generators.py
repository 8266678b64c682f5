"""Generators (affine maps and small leaky-ReLU MLPs), their Jacobians and
parameter gradients, push-forward scores, and the Adam optimiser.

All batched methods take latent codes ``z`` of shape ``(M, n_in)`` (a single
``(n_in,)`` vector is accepted too) and flatten parameters in a fixed order
described by a :class:`ParamLayout`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from ._io import atomic_write_bytes
from .numkit import SingularMatrixError

DEFAULT_SLOPE = 0.2
CKPT_MAGIC = b"SCOREFLOW-CKPT 1\n"


@dataclass(frozen=True)
class ParamLayout:
    """Ordered ``(name, shape)`` entries that map a flat vector back to arrays."""

    entries: tuple

    @property
    def size(self):
        return sum(int(np.prod(shape)) for _, shape in self.entries)

    def flatten(self, arrays):
        return np.concatenate([np.asarray(a, dtype=np.float64).ravel() for a in arrays])

    def unflatten(self, vec):
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.size,):
            raise ValueError(f"parameter vector has shape {vec.shape}, layout needs ({self.size},)")
        out, pos = [], 0
        for _, shape in self.entries:
            n = int(np.prod(shape))
            out.append(vec[pos:pos + n].reshape(shape))
            pos += n
        return out

    def describe(self):
        return ";".join(f"{name}:{'x'.join(map(str, shape))}" for name, shape in self.entries)

    @classmethod
    def parse(cls, text):
        entries = []
        for item in text.split(";"):
            name, dims = item.split(":")
            entries.append((name, tuple(int(d) for d in dims.split("x"))))
        return cls(tuple(entries))


def _batch(z, n_in):
    z = np.asarray(z, dtype=np.float64)
    single = z.ndim == 1
    z = np.atleast_2d(z)
    if z.shape[-1] != n_in:
        raise ValueError(f"latent dimension {z.shape[-1]} does not match generator input {n_in}")
    return z, single


class LinearGenerator:
    """``x = A z + b``."""

    kind = "linear"

    def __init__(self, A, b):
        self.A = np.array(A, dtype=np.float64, ndmin=2)
        self.b = np.array(b, dtype=np.float64).reshape(-1)
        if self.A.shape[0] != self.b.shape[0]:
            raise ValueError("A and b disagree on the output dimension")
        if not (np.all(np.isfinite(self.A)) and np.all(np.isfinite(self.b))):
            raise ValueError("non-finite generator parameters")
        self.layout = ParamLayout((("A", self.A.shape), ("b", self.b.shape)))

    @classmethod
    def identity(cls, n_out, n_in=None):
        n_in = n_out if n_in is None else n_in
        return cls(np.eye(n_out, n_in), np.zeros(n_out))

    @property
    def n_in(self):
        return self.A.shape[1]

    @property
    def n_out(self):
        return self.A.shape[0]

    @property
    def params(self):
        return self.layout.flatten([self.A, self.b])

    def with_params(self, theta):
        A, b = self.layout.unflatten(theta)
        return LinearGenerator(A, b)

    def forward(self, z):
        z, single = _batch(z, self.n_in)
        x = z @ self.A.T + self.b
        return x[0] if single else x

    def jacobian(self, z):
        z, single = _batch(z, self.n_in)
        J = np.broadcast_to(self.A, (z.shape[0],) + self.A.shape).copy()
        return J[0] if single else J

    def vjp(self, z, upstream):
        """Gradient of ``sum_m upstream_m . G(z_m)`` with respect to the flat parameters."""
        z, _ = _batch(z, self.n_in)
        u = np.atleast_2d(np.asarray(upstream, dtype=np.float64))
        if u.shape != (z.shape[0], self.n_out):
            raise ValueError(f"upstream shape {u.shape} does not match outputs ({z.shape[0]}, {self.n_out})")
        return self.layout.flatten([u.T @ z, u.sum(axis=0)])

    def config(self):
        return {"type": "linear", "n_in": self.n_in, "n_out": self.n_out}


def leaky_relu(a, slope):
    return np.where(a >= 0, a, slope * a)


class MlpGenerator:
    """Fully connected net with leaky-ReLU hidden layers and a linear output layer.

    ``widths = [n_in, h_1, ..., n_out]``. Weights have shape ``(out, in)``. The
    activation derivative at exactly zero is taken as 1.
    """

    kind = "mlp"

    def __init__(self, widths, weights, biases, slope=DEFAULT_SLOPE):
        self.widths = [int(w) for w in widths]
        if len(self.widths) < 2:
            raise ValueError("an MLP needs at least input and output widths")
        if not 0 < slope < 1:
            raise ValueError("leaky-ReLU slope must lie in (0, 1)")
        self.slope = float(slope)
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        if len(self.weights) != len(self.widths) - 1 or len(self.biases) != len(self.weights):
            raise ValueError("need one weight matrix and bias per layer")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.widths[i + 1], self.widths[i]) or b.shape != (self.widths[i + 1],):
                raise ValueError(f"layer {i} has incompatible shapes {w.shape}, {b.shape}")
        entries = []
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            entries += [(f"W{i}", w.shape), (f"b{i}", b.shape)]
        self.layout = ParamLayout(tuple(entries))

    @classmethod
    def init(cls, widths, rng, slope=DEFAULT_SLOPE):
        """Glorot-uniform weights, zero biases."""
        weights, biases = [], []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            lim = math.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-lim, lim, size=(fan_out, fan_in)))
            biases.append(np.zeros(fan_out))
        return cls(widths, weights, biases, slope)

    @property
    def n_in(self):
        return self.widths[0]

    @property
    def n_out(self):
        return self.widths[-1]

    @property
    def params(self):
        arrays = []
        for w, b in zip(self.weights, self.biases):
            arrays += [w, b]
        return self.layout.flatten(arrays)

    def with_params(self, theta):
        arrays = self.layout.unflatten(theta)
        return MlpGenerator(self.widths, arrays[0::2], arrays[1::2], self.slope)

    def _trace(self, z):
        pre, post = [], [z]
        h = z
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            a = h @ w.T + b
            pre.append(a)
            h = a if i == last else leaky_relu(a, self.slope)
            post.append(h)
        return pre, post

    def _dact(self, a):
        return np.where(a >= 0, 1.0, self.slope)

    def forward(self, z):
        z, single = _batch(z, self.n_in)
        x = self._trace(z)[1][-1]
        return x[0] if single else x

    def jacobian(self, z):
        z, single = _batch(z, self.n_in)
        pre, _ = self._trace(z)
        J = np.broadcast_to(self.weights[0], (z.shape[0],) + self.weights[0].shape)
        for i in range(1, len(self.weights)):
            J = self.weights[i] @ (self._dact(pre[i - 1])[:, :, None] * J)
        return J[0] if single else J

    def vjp(self, z, upstream):
        z, _ = _batch(z, self.n_in)
        g = np.atleast_2d(np.asarray(upstream, dtype=np.float64))
        if g.shape != (z.shape[0], self.n_out):
            raise ValueError(f"upstream shape {g.shape} does not match outputs ({z.shape[0]}, {self.n_out})")
        pre, post = self._trace(z)
        grads = [None] * (2 * len(self.weights))
        for i in reversed(range(len(self.weights))):
            grads[2 * i] = g.T @ post[i]
            grads[2 * i + 1] = g.sum(axis=0)
            if i:
                g = (g @ self.weights[i]) * self._dact(pre[i - 1])
        return self.layout.flatten(grads)

    def config(self):
        return {"type": "mlp", "widths": list(self.widths), "slope": self.slope}


def gen_forward(g, z):
    return g.forward(z)


def gen_jacobian(g, z):
    return g.jacobian(z)


def gen_vjp(g, z, upstream):
    return g.vjp(z, upstream)


def _log_volume(J):
    """``ln|det J|`` for square ``J``, ``0.5 ln det(J^T J)`` for tall ``J`` (batched)."""
    if J.shape[-1] == J.shape[-2]:
        sign, val = np.linalg.slogdet(J)
    else:
        sign, val = np.linalg.slogdet(np.swapaxes(J, -1, -2) @ J)
        val = 0.5 * val
    if np.any(sign == 0):
        raise SingularMatrixError("generator Jacobian is singular at a stencil point")
    return val


def logdet_grad_fd(g, z, h=1e-5):
    """Central-difference gradient of ``z -> ln|det J(z)|`` (``0.5 ln det J^T J`` when tall)."""
    z, single = _batch(z, g.n_in)
    out = np.empty_like(z)
    for i in range(g.n_in):
        e = np.zeros(g.n_in)
        e[i] = h
        out[:, i] = (_log_volume(g.jacobian(z + e)) - _log_volume(g.jacobian(z - e))) / (2 * h)
    return out[0] if single else out


def _prior_score(prior, z):
    return -z if prior is None else prior.score(z)


def generator_score_square(g, z, prior=None, h=1e-5):
    """Score of the push-forward density at ``x = G(z)`` for a square generator.

    ``-J^{-T} (grad_z ln|det J| - grad_z ln p_z(z))``; ``prior=None`` means the
    standard normal.
    """
    if g.n_in != g.n_out:
        raise ValueError("square score formula needs n_in == n_out")
    z, single = _batch(z, g.n_in)
    J = g.jacobian(z)
    sign, _ = np.linalg.slogdet(J)
    if np.any(sign == 0):
        raise SingularMatrixError("generator Jacobian is singular")
    rhs = logdet_grad_fd(g, z, h) - _prior_score(prior, z)
    out = -np.linalg.solve(np.swapaxes(J, -1, -2), rhs[..., None])[..., 0]
    return out[0] if single else out


def generator_score_rect(g, z, prior=None, h=1e-5, rank_tol=1e-10):
    """Approximate push-forward score for ``n_in <= n_out`` through the pseudoinverse:
    ``pinv(J)^T (grad_z ln p_z(z) - 0.5 grad_z ln det J^T J)``."""
    if g.n_in > g.n_out:
        raise ValueError("rectangular score formula needs n_in <= n_out")
    z, single = _batch(z, g.n_in)
    J = g.jacobian(z)
    sv = np.linalg.svd(J, compute_uv=False)
    if np.any(sv[..., -1] <= rank_tol * np.maximum(sv[..., 0], 1.0)):
        raise SingularMatrixError("generator Jacobian is rank deficient")
    Jp = np.linalg.pinv(J)
    rhs = _prior_score(prior, z) - logdet_grad_fd(g, z, h)
    out = np.einsum("mij,mi->mj", Jp, rhs)
    return out[0] if single else out


def generator_score(g, z, prior=None, h=1e-5):
    if g.n_in == g.n_out:
        return generator_score_square(g, z, prior, h)
    return generator_score_rect(g, z, prior, h)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, size, **hyper):
        return cls(np.zeros(size), np.zeros(size), 0, **hyper)


def adam_step(state, params, grad):
    """One bias-corrected Adam update. Returns ``(new_params, new_state)``."""
    params = np.asarray(params, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if params.shape != grad.shape or params.shape != state.m.shape:
        raise ValueError(f"shape mismatch: params {params.shape}, grad {grad.shape}, state {state.m.shape}")
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new = params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return new, replace(state, m=m, v=v, t=t)


def generator_from_config(cfg, n_out, rng):
    """Build a freshly initialised generator from ``{"type": "linear"|"mlp", ...}``."""
    kind = cfg.get("type")
    if kind == "linear":
        return LinearGenerator.identity(n_out, int(cfg.get("n_in", n_out)))
    if kind == "mlp":
        widths = list(cfg["widths"])
        if len(widths) < 2:
            raise ValueError("mlp widths need at least [n_in, n_out]")
        if widths[-1] != n_out:
            raise ValueError(f"mlp output width {widths[-1]} does not match data dimension {n_out}")
        return MlpGenerator.init(widths, rng, float(cfg.get("slope", DEFAULT_SLOPE)))
    raise ValueError(f"unknown generator type {kind!r}")


def save_checkpoint(path, g):
    """Header line, one JSON line (architecture + layout), then little-endian float64 params."""
    meta = dict(g.config(), layout=g.layout.describe())
    data = CKPT_MAGIC + json.dumps(meta, sort_keys=True).encode() + b"\n"
    data += g.params.astype("<f8").tobytes()
    atomic_write_bytes(path, data)


def load_checkpoint(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if not raw.startswith(CKPT_MAGIC):
        raise ValueError("not a scoreflow checkpoint")
    rest = raw[len(CKPT_MAGIC):]
    line, _, body = rest.partition(b"\n")
    meta = json.loads(line)
    layout = ParamLayout.parse(meta["layout"])
    theta = np.frombuffer(body, dtype="<f8").astype(np.float64)
    if theta.size != layout.size:
        raise ValueError(f"checkpoint holds {theta.size} values, layout needs {layout.size}")
    if meta["type"] == "linear":
        A, b = layout.unflatten(theta)
        return LinearGenerator(A, b)
    arrays = layout.unflatten(theta)
    return MlpGenerator(meta["widths"], arrays[0::2], arrays[1::2], meta["slope"])
