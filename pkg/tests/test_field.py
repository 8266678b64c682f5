import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scoreflow.flowcore.field import (
    DiscriminatorField,
    disc_eval,
    disc_grad,
    flow_residual,
    mean_kernel,
    mean_kernel_grad,
    pair_distances,
)
from scoreflow.kernels import imq, kernel_eval, kernel_grad, mog, phs, rbfg

KERNELS = [rbfg(1.0), mog(), imq(1.0), phs(0, 2), phs(1, 2), phs(2, 2), phs(-1, 2)]
IDS = ["rbfg", "mog", "imq", "phs0", "phs1", "phs2", "phs-1"]


def brute_value(kernel, x, data, gen, scale):
    # direct double loop over centres
    kernel = kernel.with_dim(x.shape[0])
    kg = np.mean([kernel_eval(kernel, x - g) for g in gen])
    kd = np.mean([kernel_eval(kernel, x - d) for d in data])
    return scale * kernel.polarity * (kg - kd)


def brute_residual(kernel, x, data, gen):
    kernel = kernel.with_dim(x.shape[0])
    return np.mean([kernel_grad(kernel, x - g) for g in gen], axis=0) - np.mean(
        [kernel_grad(kernel, x - d) for d in data], axis=0
    )


def fd_field_grad(f, x, h=1e-6):
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f.value(x + e) - f.value(x - e)) / (2 * h)
    return g


@pytest.fixture
def centres(nprng):
    return nprng.normal(size=(7, 2)), nprng.normal(size=(5, 2)) + 1.0


class TestPairDistances:
    @pytest.mark.parametrize("dim", [2, 10])
    def test_against_direct(self, dim, nprng):
        x = nprng.normal(size=(6, dim))
        c = nprng.normal(size=(4, dim))
        ref = np.linalg.norm(x[:, None, :] - c[None, :, :], axis=2)
        np.testing.assert_allclose(pair_distances(x, c), ref, rtol=1e-12, atol=1e-12)

    def test_exact_zero_for_coincident_points_high_dim(self, nprng):
        c = nprng.normal(size=(3, 20)) * 100
        r = pair_distances(c, c)
        np.testing.assert_array_equal(np.diag(r), 0.0)


class TestDiscriminator:
    @pytest.mark.parametrize("kernel", KERNELS, ids=IDS)
    def test_value_matches_brute_force(self, kernel, centres, nprng):
        data, gen = centres
        f = DiscriminatorField(data, gen, kernel, scale=0.7)
        for x in nprng.normal(size=(5, 2)):
            assert disc_eval(f, x) == pytest.approx(brute_value(kernel, x, data, gen, 0.7), rel=1e-12, abs=1e-14)

    def test_identical_centres_cancel(self, centres, nprng):
        data, _ = centres
        f = DiscriminatorField(data, data.copy(), rbfg())
        np.testing.assert_array_equal(f.value(nprng.normal(size=(10, 2))), 0.0)

    def test_negative_near_lone_data_centre(self):
        d = np.array([[0.0, 0.0]])
        far = np.array([[50.0, 50.0]])
        for kernel in (rbfg(), imq(), mog()):
            f = DiscriminatorField(d, far, kernel)
            assert f.value(np.array([0.1, -0.1])) < 0
            assert f.value(np.array([0.1, -0.1])) == pytest.approx(
                brute_value(kernel, np.array([0.1, -0.1]), d, far, 1.0))

    def test_scale_is_linear(self, centres, nprng):
        data, gen = centres
        x = nprng.normal(size=(4, 2))
        f1 = DiscriminatorField(data, gen, imq())
        f2 = DiscriminatorField(data, gen, imq(), scale=2.0)
        np.testing.assert_allclose(f2.value(x), 2 * f1.value(x), rtol=1e-15)
        np.testing.assert_allclose(f2.grad(x), 2 * f1.grad(x), rtol=1e-15)

    @pytest.mark.parametrize("kernel", KERNELS, ids=IDS)
    def test_grad_matches_fd(self, kernel, centres, nprng):
        data, gen = centres
        f = DiscriminatorField(data, gen, kernel)
        for x in nprng.normal(size=(100, 2)) * 2:
            g = disc_grad(f, x)
            fd = fd_field_grad(f, x)
            assert np.linalg.norm(g - fd) <= 1e-6 * max(np.linalg.norm(g), 1e-3)

    def test_coincident_single_centres(self):
        c = np.array([[0.5, 0.5]])
        for kernel in KERNELS:
            f = DiscriminatorField(c, c, kernel)
            np.testing.assert_array_equal(f.grad(c[0]), np.zeros(2))

    def test_bisector_symmetry(self):
        a = 1.3
        for kernel in KERNELS:
            f = DiscriminatorField(np.array([[-a, 0.0]]), np.array([[a, 0.0]]), kernel)
            for y in (-2.0, 0.4, 3.0):
                assert f.grad(np.array([0.0, y]))[1] == pytest.approx(0.0, abs=1e-15)

    def test_validation(self):
        with pytest.raises(ValueError):
            DiscriminatorField(np.zeros((2, 2)), np.zeros((2, 3)), rbfg())
        with pytest.raises(ValueError):
            DiscriminatorField(np.zeros((2, 2)), np.zeros((2, 2)), rbfg(), scale=0.0)
        with pytest.raises(ValueError):
            DiscriminatorField(np.zeros((2, 2)), np.zeros((2, 2)), rbfg()).value(np.zeros(3))


class TestResidual:
    @pytest.mark.parametrize("kernel", KERNELS, ids=IDS)
    def test_matches_brute_force(self, kernel, centres, nprng):
        data, gen = centres
        x = nprng.normal(size=(6, 2))
        ref = np.array([brute_residual(kernel, xi, data, gen) for xi in x])
        np.testing.assert_allclose(flow_residual(kernel, x, data, gen), ref, rtol=1e-12, atol=1e-14)

    def test_zero_when_sets_match(self, centres, nprng):
        data, _ = centres
        np.testing.assert_array_equal(flow_residual(phs(1, 2), nprng.normal(size=(3, 2)), data, data), 0.0)

    @pytest.mark.parametrize("kernel", KERNELS, ids=IDS)
    def test_sign_consistency_with_discriminator(self, kernel, centres, nprng):
        data, gen = centres
        x = nprng.normal(size=(5, 2))
        f = DiscriminatorField(data, gen, kernel, scale=3.0)
        res = flow_residual(kernel, x, data, gen)
        np.testing.assert_allclose(res, f.kernel.polarity * f.grad(x) / 3.0, rtol=1e-14, atol=1e-16)
        if kernel.kind == "phs" and kernel.k >= 0:
            np.testing.assert_allclose(res, -f.grad(x) / 3.0, rtol=1e-14, atol=1e-16)

    def test_swap_negates(self, centres, nprng):
        data, gen = centres
        x = nprng.normal(size=(4, 2))
        np.testing.assert_array_equal(flow_residual(imq(), x, data, gen), -flow_residual(imq(), x, gen, data))

    def test_single_point(self, centres):
        data, gen = centres
        r = flow_residual(rbfg(), np.array([0.1, 0.2]), data, gen)
        assert r.shape == (2,)

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(-10, 10), min_size=2, max_size=2), st.integers(0, 6), st.integers(0, 1000))
    def test_translation_equivariance(self, shift, which, seed):
        r = np.random.default_rng(seed)
        data, gen, x = r.normal(size=(4, 2)), r.normal(size=(3, 2)), r.normal(size=(5, 2))
        v = np.array(shift)
        kernel = KERNELS[which]
        f, ft = DiscriminatorField(data, gen, kernel), DiscriminatorField(data + v, gen + v, kernel)
        np.testing.assert_allclose(ft.value(x + v), f.value(x), rtol=1e-8, atol=1e-9)
        np.testing.assert_allclose(ft.grad(x + v), f.grad(x), rtol=1e-8, atol=1e-9)
        np.testing.assert_allclose(flow_residual(kernel, x + v, data + v, gen + v),
                                   flow_residual(kernel, x, data, gen), rtol=1e-8, atol=1e-9)


class TestChunking:
    def test_chunked_means_match(self, nprng, monkeypatch):
        import scoreflow.flowcore.field as field

        x = nprng.normal(size=(37, 3))
        c = nprng.normal(size=(11, 3))
        k = phs(1, 3)
        full_v, full_g = mean_kernel(k, x, c), mean_kernel_grad(k, x, c)
        monkeypatch.setattr(field, "CHUNK_ELEMS", 20)
        np.testing.assert_allclose(mean_kernel(k, x, c), full_v, rtol=1e-14)
        np.testing.assert_allclose(mean_kernel_grad(k, x, c), full_g, rtol=1e-13, atol=1e-15)
