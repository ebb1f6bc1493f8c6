import numpy as np
import pytest

from conftest import SIZE, image_contour, unit_set
from varimorph import extract, morph, phantoms
from varimorph import warp as wp
from varimorph.errors import DegenerateConstraintsError, DimensionMismatchError, InvalidParameterError

PIXEL = 1.0 / (SIZE - 1)


def centroid(lines):
    pts = np.vstack([extract.resample_loop(loop, 0.2 * PIXEL) for loop in lines.loops])
    return pts.mean(axis=0)


def ring_points(center, radius, n=6):
    theta = 2 * np.pi * np.arange(n) / n
    return np.asarray(center) + radius * np.column_stack([np.cos(theta), np.sin(theta)])


class TestCorrespondences:
    def test_shapes(self):
        with pytest.raises(DimensionMismatchError):
            wp.CorrespondenceSet(np.zeros((4, 2)), np.zeros((4, 3)))

    def test_too_few(self):
        with pytest.raises(DegenerateConstraintsError):
            wp.CorrespondenceSet([[0, 0], [1, 0]], [[0, 0], [1, 0]])

    def test_collinear(self):
        line = np.column_stack([np.arange(4.0), np.arange(4.0)])
        with pytest.raises(DegenerateConstraintsError, match="on B"):
            wp.CorrespondenceSet(ring_points((0, 0), 1.0, 4), line)


class TestWarps:
    def test_zero_displacement(self, rng):
        pts = rng.random((6, 2))
        w_a, w_b = wp.build_halfway_warps(wp.CorrespondenceSet(pts, pts))
        probe = rng.random((30, 2))
        np.testing.assert_array_equal(w_a(probe), 0.0)
        np.testing.assert_array_equal(w_b(probe), 0.0)

    @pytest.mark.parametrize("dim", [2, 3])
    def test_translation(self, rng, dim):
        a = rng.random((dim + 4, dim))
        v = np.arange(1.0, dim + 1.0) / 10.0
        w_a, w_b = wp.build_halfway_warps(wp.CorrespondenceSet(a, a + v))
        probe = 3.0 * rng.random((20, dim)) - 1.0
        np.testing.assert_allclose(w_a(probe), np.tile(v / 2, (20, 1)), atol=1e-8)
        np.testing.assert_allclose(w_b(probe), np.tile(-v / 2, (20, 1)), atol=1e-8)
        np.testing.assert_allclose(wp.apply_warp(w_a, a[0]), a[0] + v / 2, atol=1e-8)

    def test_square_rotation_keeps_center(self):
        c = np.array([0.5, 0.5])
        a = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
        b = np.roll(a, -1, axis=0)
        w_a, _ = wp.build_halfway_warps(wp.CorrespondenceSet(a, b))
        np.testing.assert_allclose(w_a(c), 0.0, atol=1e-9)
        np.testing.assert_allclose(w_a(a), (b - a) / 2, atol=1e-9)

    def test_interpolates_correspondences(self, rng):
        a = rng.random((12, 2))
        b = a + 0.1 * rng.standard_normal((12, 2))
        corr = wp.CorrespondenceSet(a, b)
        w_a, w_b = wp.build_halfway_warps(corr)
        np.testing.assert_allclose(w_a(a), (b - a) / 2, atol=1e-6)
        np.testing.assert_allclose(w_b(b), (a - b) / 2, atol=1e-6)
        r_a, r_b = wp.build_reverse_warps(corr)
        mid = (a + b) / 2
        np.testing.assert_allclose(wp.apply_warp(r_a, mid), a, atol=1e-6)
        np.testing.assert_allclose(wp.apply_warp(r_b, mid), b, atol=1e-6)


class TestUnwarp:
    @pytest.fixture
    def warps(self, rng):
        a = rng.random((8, 2))
        return wp.build_halfway_warps(wp.CorrespondenceSet(a, a + [0.2, -0.1] + 0.05 * rng.random((8, 2))))

    def test_identity_at_middle(self, warps, rng):
        pts = np.column_stack([rng.random((10, 2)), np.full(10, 1.5)])
        np.testing.assert_array_equal(wp.unwarp(pts, *warps, t_max=3.0), pts)

    def test_ends(self, warps):
        w_a, w_b = warps
        x = np.array([0.3, 0.4])
        np.testing.assert_allclose(wp.unwarp([*x, 0.0], w_a, w_b, 1.0), [*(x + w_a(x)), 0.0])
        np.testing.assert_allclose(wp.unwarp([*x, 1.0], w_a, w_b, 1.0), [*(x + w_b(x)), 1.0])
        np.testing.assert_allclose(wp.unwarp([*x, 0.25], w_a, w_b, 1.0), [*(x + 0.5 * w_a(x)), 0.25])

    def test_t_max(self, warps):
        with pytest.raises(InvalidParameterError):
            wp.unwarp([0.0, 0.0, 0.0], *warps, t_max=0.0)


class TestWarpedMorph:
    def test_constraints_keep_pair_distance(self, rng):
        cset = phantoms.circle_constraints(0.3, n=12, offset=0.05, center=(0.5, 0.5))
        a = rng.random((6, 2))
        w_a, _ = wp.build_halfway_warps(wp.CorrespondenceSet(a, a + 0.1 * rng.standard_normal((6, 2))))
        warped = wp.warp_constraints(cset, w_a)
        np.testing.assert_allclose(warped.boundary, wp.apply_warp(w_a, cset.boundary))
        bnd, nrm = warped.pairs()
        np.testing.assert_allclose(np.linalg.norm(nrm - bnd, axis=1), 0.05)

    def test_translation_centers_the_middle(self):
        a = unit_set(phantoms.disk_image(SIZE, 10.0, center=(18.0, 31.5)), 120)
        b = unit_set(phantoms.disk_image(SIZE, 10.0, center=(44.0, 31.5)), 120)
        center_a = np.array([18.0, 31.5]) * PIXEL
        v = np.array([26.0, 0.0]) * PIXEL
        corr = wp.CorrespondenceSet(ring_points(center_a, 10.0 * PIXEL), ring_points(center_a, 10.0 * PIXEL) + v)
        grid = extract.GridSpec(((0.0, 0.0), (1.0, 1.0)), 128)
        frames = wp.warped_morph(a, b, corr, 1.0, None, 3, grid)
        assert np.linalg.norm(centroid(frames[1]) - (center_a + v / 2)) <= PIXEL
        assert extract.hausdorff(frames[0], a.boundary) <= PIXEL
        assert extract.hausdorff(frames[2], b.boundary) <= PIXEL

    def test_identity_correspondences_change_nothing(self):
        a = phantoms.circle_constraints(0.2, n=16, offset=0.05, center=(0.4, 0.5))
        b = phantoms.ellipse_constraints(0.3, 0.15, n=16, offset=0.05, center=(0.6, 0.5))
        pts = ring_points((0.5, 0.5), 0.3)
        grid = extract.GridSpec(((0.0, 0.0), (1.0, 1.0)), 64)
        warped = wp.warped_morph(a, b, wp.CorrespondenceSet(pts, pts), 1.0, None, 4, grid)
        plain = morph.morph_sequence(morph.build_morph(a, b, 1.0), 4, grid)
        for f, g in zip(warped, plain):
            assert extract.hausdorff(f, g) <= 1e-6

    def test_dimension_check(self):
        a = phantoms.circle_constraints(0.2)
        corr = wp.CorrespondenceSet(np.eye(4)[:, :3], np.eye(4)[:, :3])
        with pytest.raises(DimensionMismatchError):
            wp.warped_morph(a, a, corr, 1.0, None, 2, extract.GridSpec(((0, 0), (1, 1)), 16))

    def test_x_to_o_with_rotated_correspondences(self, x_set, o_set, x_image, o_image):
        c = np.array([31.5, 31.5])
        tips = c + 20.0 * np.array([[1.0, 1.0], [-1.0, 1.0], [-1.0, -1.0], [1.0, -1.0]])
        # each arm tip goes to the ring midline 45 degrees further round
        ring = c + 18.0 * np.array([[0.0, 1.0], [-1.0, 0.0], [0.0, -1.0], [1.0, 0.0]])
        corr = wp.CorrespondenceSet(np.vstack([tips, c]) * PIXEL, np.vstack([ring, c]) * PIXEL)
        grid = extract.GridSpec(((0.0, 0.0), (1.0, 1.0)), 128)
        frames = wp.warped_morph(x_set, o_set, corr, 1.0, None, 5, grid)
        step = 0.1 * PIXEL
        assert extract.hausdorff(frames[0], image_contour(x_image), step) <= PIXEL
        assert extract.hausdorff(frames[-1], image_contour(o_image), step) <= PIXEL

    def test_build_reports_pivot(self):
        a = phantoms.circle_constraints(0.2, n=16, offset=0.05, center=(0.4, 0.5))
        b = phantoms.circle_constraints(0.25, n=16, offset=0.05, center=(0.6, 0.5))
        pts = ring_points((0.5, 0.5), 0.3)
        wm = wp.build_warped_morph(a, b, wp.CorrespondenceSet(pts, pts + [0.05, 0.0]), 1.0)
        assert wm.min_pivot == wm.morph.model.min_pivot
        assert wm.min_pivot > 0.0
        frames = wp.warped_sequence(wm, 3, extract.GridSpec(((0.0, 0.0), (1.0, 1.0)), 64))
        assert len(frames) == 3
