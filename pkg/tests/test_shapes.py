import numpy as np
import pytest
from scipy.stats import chisquare

from scoreflow.expcli.pgm import GrayscaleMask
from scoreflow.expcli.shapes import SHAPES, THRESHOLD, make_shape, shape_sample
from scoreflow.numkit import SeededPrng


def to_cells(points, mask):
    # inverse of the sampler's pixel -> [-1, 1]^2 map
    h, w = mask.height, mask.width
    s = 2.0 / max(h, w)
    col = np.floor(points[:, 0] / s + w / 2.0).astype(int)
    row = np.floor(h / 2.0 - points[:, 1] / s).astype(int)
    return row, col


class TestSample:
    def test_forced_support(self):
        m = GrayscaleMask(np.array([[0, 255], [255, 0]], dtype=np.uint8))
        p = shape_sample(m, 2000, SeededPrng(0))
        row, col = to_cells(p, m)
        assert set(zip(row.tolist(), col.tolist())) == {(0, 0), (1, 1)}
        # row 0 is the top of the square
        assert np.all(p[row == 0, 1] > 0) and np.all(p[row == 0, 0] < 0)

    def test_uniform_on_black_square(self):
        m = GrayscaleMask(np.zeros((8, 8), dtype=np.uint8))
        p = shape_sample(m, 10_000, SeededPrng(1))
        assert np.all(np.abs(p) <= 1.0)
        counts, _, _ = np.histogram2d(p[:, 0], p[:, 1], bins=4, range=[[-1, 1], [-1, 1]])
        assert chisquare(counts.ravel()).pvalue > 0.01

    def test_empty_support(self):
        with pytest.raises(ValueError):
            shape_sample(GrayscaleMask(np.full((3, 3), 255, dtype=np.uint8)), 5, SeededPrng(0))

    def test_threshold_is_strict(self):
        m = GrayscaleMask(np.array([[127, 128]], dtype=np.uint8))
        _, col = to_cells(shape_sample(m, 500, SeededPrng(0)), m)
        assert set(col.tolist()) == {0}

    def test_aspect_preserved(self):
        m = GrayscaleMask(np.zeros((2, 4), dtype=np.uint8))
        p = shape_sample(m, 5000, SeededPrng(2))
        assert p[:, 0].min() < -0.99 and p[:, 0].max() > 0.99
        assert np.all(np.abs(p[:, 1]) <= 0.5)

    @pytest.mark.parametrize("name", SHAPES)
    def test_support_invariant(self, name):
        m = make_shape(name, 48)
        p = shape_sample(m, 3000, SeededPrng(3))
        row, col = to_cells(p, m)
        assert np.all(m.pixels[row, col] < THRESHOLD)

    def test_deterministic(self):
        m = make_shape("heart")
        np.testing.assert_array_equal(shape_sample(m, 50, SeededPrng(4)), shape_sample(m, 50, SeededPrng(4)))


class TestShapes:
    def test_heart_points_up(self):
        # the lobes are at the top of the image, the tip at the bottom
        px = make_shape("heart", 64).pixels < THRESHOLD
        rows = np.nonzero(px)[0]
        top_width = px[rows.min() + 3].sum()
        bottom_width = px[rows.max() - 3].sum()
        assert top_width > bottom_width

    def test_disk_area(self):
        px = make_shape("disk", 200).pixels < THRESHOLD
        assert px.mean() == pytest.approx(np.pi * 0.8**2 / 4, rel=0.02)

    def test_spiral_is_thin(self):
        px = make_shape("spiral", 64).pixels < THRESHOLD
        assert 0.05 < px.mean() < 0.35

    def test_unknown(self):
        with pytest.raises(ValueError):
            make_shape("star")
