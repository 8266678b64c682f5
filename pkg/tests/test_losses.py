import numpy as np
import pytest

from _oracles import fd_theta, rel_err
from scoreflow.flowcore.field import flow_residual
from scoreflow.flowcore.losses import (
    flowgan_drift,
    flowgan_drift_potential,
    flowgan_loss,
    scoregan_loss,
    scoregan_value,
)
from scoreflow.generators import LinearGenerator, MlpGenerator
from scoreflow.kernels import imq, kernel_grad, phs, rbfg
from scoreflow.numkit import SeededPrng, SingularMatrixError
from scoreflow.scores import GaussianSpec, GmmSpec

FLOW_KERNELS = [phs(0, 2), phs(1, 2), phs(2, 2), imq(1.0), rbfg(1.5)]


def mlp(seed, widths=(2, 8, 6, 2)):
    return MlpGenerator.init(list(widths), SeededPrng(seed))


def mixture():
    return GmmSpec([0.2, 0.8], [GaussianSpec([-5.0, -5.0], np.eye(2)), GaussianSpec([5.0, 5.0], np.eye(2))])


class TestFlowganLoss:
    def test_zero_when_prev_equals_data(self, nprng):
        g = mlp(0)
        data = nprng.normal(size=(10, 2))
        loss, grad = flowgan_loss(g, g.params, nprng.normal(size=(5, 2)), data, data.copy(), phs(1, 2))
        assert loss == 0.0
        np.testing.assert_array_equal(grad, 0.0)

    def test_single_sample_hand_expansion(self):
        g = LinearGenerator([[1.0, 0.5], [0.0, 2.0]], [0.3, -0.1])
        z = np.array([[0.4, -0.7]])
        y_data, y_prev = np.array([1.0, 1.0]), np.array([-1.0, 0.5])
        k = imq(0.5)
        x = g.forward(z[0])
        ref = kernel_grad(k, x - y_prev) - kernel_grad(k, x - y_data)
        loss, _ = flowgan_loss(g, g.params, z, y_data[None], y_prev[None], k)
        assert loss == pytest.approx(float(ref @ ref), rel=1e-14)

    @pytest.mark.parametrize("kernel", FLOW_KERNELS, ids=lambda k: f"{k.kind}{k.k}")
    def test_gradient_matches_fd(self, kernel, nprng):
        g = mlp(1)
        z = nprng.normal(size=(6, 2))
        data = nprng.normal(size=(8, 2)) + 1.0
        prev = nprng.normal(size=(7, 2))
        _, grad = flowgan_loss(g, g.params, z, data, prev, kernel)
        fd = fd_theta(lambda th: flowgan_loss(g, th, z, data, prev, kernel)[0], g.params)
        assert rel_err(grad, fd) < 1e-4

    def test_zero_iff_residual_zero(self, nprng):
        g = LinearGenerator.identity(2)
        data = nprng.normal(size=(4, 2))
        prev = data + 0.5
        z = nprng.normal(size=(3, 2))
        loss, _ = flowgan_loss(g, g.params, z, data, prev, phs(1, 2))
        res = flow_residual(phs(1, 2), z, data, prev)
        assert loss == pytest.approx(np.mean(np.sum(res**2, axis=1))) and loss > 0

    def test_empty_batch(self, nprng):
        g = LinearGenerator.identity(2)
        with pytest.raises(ValueError):
            flowgan_loss(g, g.params, np.zeros((0, 2)), np.ones((2, 2)), np.ones((2, 2)), phs(1, 2))


class TestDrift:
    @pytest.mark.parametrize("kernel", FLOW_KERNELS, ids=lambda k: f"{k.kind}{k.k}")
    def test_step_is_gradient_of_potential(self, kernel, nprng):
        g = mlp(2)
        z = nprng.normal(size=(6, 2))
        data = nprng.normal(size=(8, 2)) + 1.0
        prev = nprng.normal(size=(7, 2))
        value, step = flowgan_drift(g, g.params, z, data, prev, kernel)
        fd = fd_theta(lambda th: flowgan_drift_potential(g, th, z, data, prev, kernel), g.params)
        assert rel_err(step, fd) < 1e-5
        assert value == pytest.approx(flowgan_loss(g, g.params, z, data, prev, kernel)[0], rel=1e-12)

    def test_moves_samples_towards_data(self):
        # generator offset b only: the drift step on b must point from the samples to the data
        g = LinearGenerator(np.eye(2), [0.0, 0.0])
        z = SeededPrng(0).normal((200, 2)) * 0.1
        data = np.array([[3.0, 0.0]]) + SeededPrng(1).normal((200, 2)) * 0.1
        for kernel in (phs(0, 2), phs(1, 2), imq(4.0)):
            _, step = flowgan_drift(g, g.params, z, data, z.copy(), kernel)
            _, db = g.layout.unflatten(step)
            assert db[0] < 0 and abs(db[1]) < abs(db[0])

    def test_zero_when_prev_equals_data(self, nprng):
        g = mlp(3)
        data = nprng.normal(size=(5, 2))
        _, step = flowgan_drift(g, g.params, nprng.normal(size=(4, 2)), data, data, phs(0, 2))
        np.testing.assert_array_equal(step, 0.0)


class TestScoreganLoss:
    def test_exact_transport_is_zero(self):
        cov = np.array([[0.75, 0.2], [0.2, 0.5]])
        root = np.linalg.cholesky(cov)
        target = GaussianSpec([5.0, 5.0], cov)
        g = LinearGenerator(root, target.mean)
        loss, grad = scoregan_loss(g, g.params, SeededPrng(0).normal((50, 2)), target)
        assert loss == pytest.approx(0.0, abs=1e-24)
        np.testing.assert_allclose(grad, 0.0, atol=1e-12)

    def test_identity_generator_shifted_target(self):
        mu = np.array([1.5, -0.5])
        g = LinearGenerator.identity(2)
        z = SeededPrng(1).normal((1000, 2))
        loss, _ = scoregan_loss(g, g.params, z, GaussianSpec(mu, np.eye(2)))
        assert loss == pytest.approx(mu @ mu, rel=1e-12)

    def test_permutation_invariance(self, nprng):
        g = mlp(4)
        z = nprng.normal(size=(10, 2))
        a, _ = scoregan_loss(g, g.params, z, mixture())
        b, _ = scoregan_loss(g, g.params, z[::-1], mixture())
        assert a == pytest.approx(b, rel=1e-13)

    def test_linear_gradient_matches_fd(self, nprng):
        g = LinearGenerator(nprng.normal(size=(2, 2)) + 2 * np.eye(2), nprng.normal(size=2))
        z = nprng.normal(size=(20, 2))
        target = GaussianSpec([1.0, 2.0], [[1.0, 0.3], [0.3, 0.6]])
        _, grad = scoregan_loss(g, g.params, z, target)
        fd = fd_theta(lambda th: scoregan_value(g, th, z, target), g.params)
        assert rel_err(grad, fd) < 1e-6

    @pytest.mark.parametrize("seed", range(4))
    def test_mlp_gradient_matches_fd(self, seed):
        g = mlp(seed)
        r = SeededPrng(100 + seed)
        z = r.normal((12, 2))
        _, grad = scoregan_loss(g, g.params, z, mixture())
        fd = fd_theta(lambda th: scoregan_value(g, th, z, mixture()), g.params)
        assert rel_err(grad, fd) < 1e-4

    def test_mlp_value_matches_general_score(self, nprng):
        g = mlp(5)
        z = nprng.normal(size=(8, 2))
        loss, _ = scoregan_loss(g, g.params, z, mixture())
        assert loss == pytest.approx(scoregan_value(g, g.params, z, mixture()), rel=1e-9)

    def test_tall_generator_uses_fd_route(self, nprng):
        g = LinearGenerator(nprng.normal(size=(3, 2)), np.zeros(3))
        z = nprng.normal(size=(5, 2))
        target = GaussianSpec(np.ones(3), np.eye(3))
        loss, grad = scoregan_loss(g, g.params, z, target)
        assert loss == pytest.approx(scoregan_value(g, g.params, z, target))
        assert grad.shape == g.params.shape and np.all(np.isfinite(grad))

    def test_singular_generator(self):
        g = LinearGenerator(np.zeros((2, 2)), np.zeros(2))
        with pytest.raises(SingularMatrixError):
            scoregan_loss(g, g.params, np.ones((3, 2)), GaussianSpec.standard(2))
