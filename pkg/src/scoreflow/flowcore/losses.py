"""Generator losses: kernel flow matching and score matching.

Both return ``(loss, grad)`` with ``grad`` the gradient with respect to the flat
generator parameter vector ``theta``.
"""

from __future__ import annotations

import numpy as np

from ..generators import LinearGenerator, MlpGenerator, generator_score
from ..numkit import SingularMatrixError
from .field import _residual, as_particles, flow_residual_and_hvp, mean_kernel

FD_REL_STEP = 1e-5


def flowgan_loss(gen, theta, z_batch, data_batch, prev_gen_batch, kernel):
    """Mean squared flow residual at the generated points.

    ``loss = mean_m |res(G(z_m))|^2`` with
    ``res(x) = mean_g grad kappa(x - g) - mean_d grad kappa(x - d)``.
    Centres are held fixed, so ``dL/dx_m = (2/M) H_res(x_m) res(x_m)`` with
    ``H_res`` the matching difference of mean kernel Hessians (symmetric).
    """
    data = as_particles(data_batch, "data_batch")
    prev = as_particles(prev_gen_batch, "prev_gen_batch")
    z = np.atleast_2d(np.asarray(z_batch, dtype=np.float64))
    if z.shape[0] == 0:
        raise ValueError("empty z batch")
    kernel = kernel.with_dim(data.shape[1])
    g = gen.with_params(theta)
    x = g.forward(z)
    res, hres = flow_residual_and_hvp(kernel, x, data, prev)
    loss = float(np.mean(np.sum(res * res, axis=1)))
    upstream = (2.0 / x.shape[0]) * hres
    return loss, g.vjp(z, upstream)


def _score_residual(g, z, target, h):
    x = g.forward(z)
    return generator_score(g, z, h=h) - target.score(x), x


def scoregan_value(gen, theta, z_batch, target, h=1e-5):
    z = np.atleast_2d(np.asarray(z_batch, dtype=np.float64))
    r, _ = _score_residual(gen.with_params(theta), z, target, h)
    return float(np.mean(np.sum(r * r, axis=1)))


def _linear_scoregan(g, z, target):
    A, b = g.A, g.b
    x = z @ A.T + b
    try:
        w = np.linalg.solve(A.T, z.T).T
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError("linear generator matrix is singular") from exc
    r = -w - target.score(x)
    loss = float(np.mean(np.sum(r * r, axis=1)))
    m = z.shape[0]
    Ht_r = np.einsum("mij,mj->mi", target.score_jacobian(x), r)
    Ainv_r = np.linalg.solve(A, r.T).T
    dA = (2.0 / m) * (w.T @ Ainv_r - Ht_r.T @ z)
    db = (2.0 / m) * (-Ht_r.sum(axis=0))
    return loss, g.layout.flatten([dA, db])


def _mlp_scoregan(g, z, target):
    # Leaky-ReLU nets are piecewise linear, so J is locally constant in z and the
    # push-forward score is exactly -J^{-T} z. With u = -J^{-T} z, r = u - s(x)
    # and a = J^{-1} r, dL = (2/M) sum_m [-<dJ, u a^T> - (H_s r) . dx].
    pre, post = g._trace(z)
    n_layers = len(g.weights)
    m = z.shape[0]
    acts = [g._dact(a) for a in pre[:-1]]
    # Q[i] = d h_i / d z (input side of layer i), P[i] = d x / d(layer i output)
    Q = [np.broadcast_to(np.eye(g.n_in), (m, g.n_in, g.n_in))]
    for i in range(n_layers - 1):
        Q.append(acts[i][:, :, None] * (g.weights[i] @ Q[i]))
    P = [None] * n_layers
    P[-1] = np.broadcast_to(np.eye(g.n_out), (m, g.n_out, g.n_out))
    for i in range(n_layers - 1, 0, -1):
        P[i - 1] = (P[i] @ g.weights[i]) * acts[i - 1][:, None, :]
    J = P[-1] @ g.weights[-1] @ Q[-1]
    x = post[-1]
    try:
        u = -np.linalg.solve(np.swapaxes(J, 1, 2), z[:, :, None])[:, :, 0]
        r = u - target.score(x)
        a = np.linalg.solve(J, r[:, :, None])[:, :, 0]
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError("generator Jacobian is singular") from exc
    loss = float(np.mean(np.sum(r * r, axis=1)))
    C = u[:, :, None] * a[:, None, :]
    jac_part = []
    for i in range(n_layers):
        dW = -(2.0 / m) * np.einsum("moi,mop,mjp->ij", P[i], C, Q[i])
        jac_part += [dW, np.zeros_like(g.biases[i])]
    Hr = np.einsum("mij,mj->mi", target.score_jacobian(x), r)
    return loss, g.layout.flatten(jac_part) + g.vjp(z, -(2.0 / m) * Hr)


def scoregan_loss(gen, theta, z_batch, target, h=1e-5):
    """Mean squared gap between the generator's push-forward score and the target score.

    Square linear generators and square leaky-ReLU MLPs use closed-form
    gradients. Other shapes fall back to central differences over ``theta``
    with step ``1e-5 * (1 + |theta_i|)``. The generator score assumes a
    standard-normal latent prior.
    """
    z = np.atleast_2d(np.asarray(z_batch, dtype=np.float64))
    if z.shape[0] == 0:
        raise ValueError("empty z batch")
    theta = np.asarray(theta, dtype=np.float64)
    g = gen.with_params(theta)
    if g.n_in == g.n_out:
        if isinstance(g, LinearGenerator):
            return _linear_scoregan(g, z, target)
        if isinstance(g, MlpGenerator):
            return _mlp_scoregan(g, z, target)
    loss = scoregan_value(gen, theta, z, target, h)
    grad = np.empty_like(theta)
    for i in range(theta.size):
        step = FD_REL_STEP * (1.0 + abs(theta[i]))
        tp = theta.copy()
        tm = theta.copy()
        tp[i] += step
        tm[i] -= step
        grad[i] = (scoregan_value(gen, tp, z, target, h) - scoregan_value(gen, tm, z, target, h)) / (2 * step)
    return loss, grad


def flowgan_drift(gen, theta, z_batch, data_batch, prev_gen_batch, kernel):
    """Move generated samples along the kernel flow field.

    The parameter step is the chain rule of ``mean_m D(G(z_m)) / C``, i.e.
    ``J^T (p * res) / M`` per sample with ``p`` the kernel polarity, so
    descending it pulls samples towards the data and away from the previous
    generator samples. The returned value is the mean squared residual, the
    same quantity :func:`flowgan_loss` reports, kept as a convergence monitor.
    """
    data = as_particles(data_batch, "data_batch")
    prev = as_particles(prev_gen_batch, "prev_gen_batch")
    z = np.atleast_2d(np.asarray(z_batch, dtype=np.float64))
    if z.shape[0] == 0:
        raise ValueError("empty z batch")
    kernel = kernel.with_dim(data.shape[1])
    g = gen.with_params(theta)
    x = g.forward(z)
    res = _residual(kernel, x, data, prev)
    value = float(np.mean(np.sum(res * res, axis=1)))
    return value, g.vjp(z, (kernel.polarity / x.shape[0]) * res)


def flowgan_drift_potential(gen, theta, z_batch, data_batch, prev_gen_batch, kernel):
    """Scalar whose theta-gradient is the drift step (``mean_m D(G(z_m)) / C``)."""
    data = as_particles(data_batch, "data_batch")
    prev = as_particles(prev_gen_batch, "prev_gen_batch")
    kernel = kernel.with_dim(data.shape[1])
    x = gen.with_params(theta).forward(np.atleast_2d(np.asarray(z_batch, dtype=np.float64)))
    d = mean_kernel(kernel, x, prev) - mean_kernel(kernel, x, data)
    return float(kernel.polarity * np.mean(d))
