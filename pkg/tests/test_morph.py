import numpy as np
import pytest

from conftest import SIZE, image_contour, unit_set
from varimorph import constraint_gen as cg
from varimorph import extract, morph, phantoms
from varimorph.errors import (
    DegeneratePlacementError,
    DimensionMismatchError,
    EmptyShapeError,
    InvalidParameterError,
)

PIXEL = 1.0 / (SIZE - 1)
CENTER = np.array([0.5, 0.5])


def radius_along(f, angle, r_max=0.49):
    """Distance from the image center to the first inside/outside change along a ray."""
    r = np.linspace(0.0, r_max, 2000)
    pts = CENTER + np.outer(r, [np.cos(angle), np.sin(angle)])
    v = f(pts)
    k = int(np.flatnonzero((v[:-1] > 0) & (v[1:] <= 0))[0])
    return r[k] + (r[k + 1] - r[k]) * v[k] / (v[k] - v[k + 1])


@pytest.fixture(scope="module")
def disk_sets():
    return unit_set(phantoms.disk_image(SIZE, 10.0), 120), unit_set(phantoms.disk_image(SIZE, 20.0), 120)


class TestEmbedding:
    def test_coordinates(self):
        a = phantoms.circle_constraints(1.0, n=6)
        b = phantoms.circle_constraints(2.0, n=8)
        lifted = morph.embed_pair(a, b, 2.5)
        assert lifted.dim == 3
        assert len(lifted) == len(a) + len(b)
        np.testing.assert_array_equal(lifted.boundary[:6, 2], 0.0)
        np.testing.assert_array_equal(lifted.boundary[6:, 2], 2.5)
        np.testing.assert_array_equal(lifted.boundary[:6, :2], a.boundary)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            morph.embed_pair(phantoms.circle_constraints(1.0), phantoms.circle_constraints(1.0).lifted([0.0]))

    def test_t_max(self):
        with pytest.raises(InvalidParameterError):
            morph.embed_pair(phantoms.circle_constraints(1.0), phantoms.circle_constraints(1.0), 0.0)

    def test_empty_shape(self):
        with pytest.raises(EmptyShapeError):
            morph.build_morph(phantoms.circle_constraints(1.0), cg.ConstraintSet.empty(2))


class TestPairMorph:
    def test_endpoint_fidelity(self):
        a = phantoms.circle_constraints(0.3, n=16, offset=0.05, center=(0.5, 0.5))
        b = phantoms.ellipse_constraints(0.4, 0.2, n=16, offset=0.05, center=(0.5, 0.5), phase=0.1)
        m = morph.build_morph(a, b, 1.0)
        assert m.model.dim == 3
        assert m.model.kernel.value == "r3"
        for t, s in ((0.0, a), (1.0, b)):
            g = morph.slice_at(m, t)
            assert np.abs(g(s.boundary)).max() <= 1e-5
            assert np.abs(g(s.normal) - 1.0).max() <= 1e-5

    def test_frame_times(self):
        assert morph.frame_times(1.0, 8) == pytest.approx([i / 7 for i in range(8)])
        with pytest.raises(InvalidParameterError):
            morph.frame_times(1.0, 1)

    def test_x_to_o_endpoints(self, xo_morph, x_image, o_image):
        spec = extract.GridSpec(((0.0, 0.0), (1.0, 1.0)), 128)
        for t, img in ((0.0, x_image), (1.0, o_image)):
            frame = extract.extract_zero_set(morph.slice_at(xo_morph, t), spec)
            assert extract.hausdorff(frame, image_contour(img), step=0.1 * PIXEL) <= PIXEL

    def test_x_to_o_topology(self, xo_morph):
        box = ((0.0, 0.0), (1.0, 1.0))
        chis = [extract.euler_characteristic_2d(extract.rasterize(morph.slice_at(xo_morph, t), box, 128))
                for t in morph.frame_times(1.0, 8)]
        assert chis[0] == 1
        assert chis[-1] == 0
        assert set(chis) <= {0, 1}
        # the hole opens at one interior frame and stays open
        assert int(np.count_nonzero(np.diff(chis))) == 1

    def test_x_to_o_frames_are_closed(self, xo_morph, unit_grid):
        frames = morph.morph_sequence(xo_morph, 8, unit_grid, workers=2)
        assert len(frames) == 8
        for frame in frames:
            assert len(frame) > 0
            assert all(frame.closed)

    def test_smoother_than_sdf_baseline(self, xo_morph, x_image, o_image, unit_grid):
        sdf_x = cg.signed_distance_field(x_image)
        sdf_o = cg.signed_distance_field(o_image)
        step = 0.5 * PIXEL
        times = morph.frame_times(1.0, 8)[1:-1]
        frames = morph.morph_sequence(xo_morph, 8, unit_grid)[1:-1]
        variational = max(extract.max_curvature(f, step) for f in frames)
        baseline = max(extract.max_curvature(morph.sdf_contour(morph.sdf_morph_baseline(sdf_x, sdf_o, t), PIXEL), step)
                       for t in times)
        assert variational < baseline

    def test_same_disk_stays_a_disk(self, disk_sets):
        a, _ = disk_sets
        m = morph.build_morph(a, a, 1.0)
        for t in (0.25, 0.5, 0.75):
            g = morph.slice_at(m, t)
            radii = [radius_along(g, angle) for angle in np.linspace(0, 2 * np.pi, 12, endpoint=False)]
            assert np.abs(np.array(radii) - 10.0 * PIXEL).max() <= PIXEL

    def test_disk_to_moved_disk_keeps_area(self):
        a = unit_set(phantoms.disk_image(SIZE, 12.0, center=(20.0, 31.5)), 120)
        b = unit_set(phantoms.disk_image(SIZE, 12.0, center=(43.0, 31.5)), 120)
        frames = morph.morph_sequence(morph.build_morph(a, b, 1.0), 5, extract.GridSpec(((0, 0), (1, 1)), 128))
        areas = [sum(extract.polyline_area(loop) for loop in f.loops) for f in frames]
        assert max(areas) <= 1.02 * min(areas)

    def test_growing_disk_is_monotone(self, disk_sets):
        m = morph.build_morph(*disk_sets, 1.0)
        angles = np.linspace(0, 2 * np.pi, 8, endpoint=False)
        radii = np.array([[radius_along(morph.slice_at(m, t), a) for a in angles] for t in morph.frame_times(1.0, 8)])
        assert np.all(np.diff(radii, axis=0) > 0)

    def test_slice_at_rejects_influence(self):
        a = phantoms.circle_constraints(1.0, n=8)
        inf = morph.build_influence(a, phantoms.circle_constraints(0.5, n=8), phantoms.circle_constraints(0.8, n=8))
        with pytest.raises(DimensionMismatchError):
            morph.slice_at(inf, 0.5)


class TestBaselines:
    def test_sdf_alpha(self):
        a = cg.SdfGrid(np.full((4, 4), 2.0))
        b = cg.SdfGrid(np.full((4, 4), -2.0))
        np.testing.assert_array_equal(morph.sdf_morph_baseline(a, b, 0.0).values, a.values)
        np.testing.assert_array_equal(morph.sdf_morph_baseline(a, b, 1.0).values, b.values)
        np.testing.assert_allclose(morph.sdf_morph_baseline(a, b, 0.25).values, 1.0)
        with pytest.raises(InvalidParameterError):
            morph.sdf_morph_baseline(a, b, 1.5)
        with pytest.raises(DimensionMismatchError):
            morph.sdf_morph_baseline(a, cg.SdfGrid(np.zeros((3, 3))), 0.5)

    def test_sdf_of_empty_shape(self, x_image):
        with pytest.raises(EmptyShapeError):
            cg.signed_distance_field(cg.GrayImage(np.zeros_like(x_image.pixels)))

    def test_blend(self):
        a = phantoms.circle_constraints(0.5, n=12)
        b = phantoms.circle_constraints(1.0, n=12)
        blend = morph.blend_baseline(a, b, 0.5)
        first, second = blend.first, blend.second
        p = np.array([[0.1, 0.2], [0.7, 0.0]])
        np.testing.assert_allclose(blend(p), 0.5 * first(p) + 0.5 * second(p))
        assert np.abs(morph.blend_baseline(a, b, 0.0)(a.boundary)).max() <= 1e-6


class TestInfluence:
    def test_placement(self):
        assert morph.InfluencePlacement().coords == morph.DEFAULT_PLACEMENT
        with pytest.raises(DegeneratePlacementError):
            morph.InfluencePlacement(((0, 0), (1, 0), (2, 0)))
        with pytest.raises(DegeneratePlacementError):
            morph.InfluencePlacement(((0, 0), (1, 0)))

    def test_embedding(self):
        a = phantoms.circle_constraints(1.0, n=4)
        lifted = morph.embed_influence(a, a.scaled(0.5), a.scaled(0.8))
        assert lifted.dim == 4
        np.testing.assert_array_equal(lifted.boundary[:4, 2:], np.tile([0.0, 0.0], (4, 1)))
        np.testing.assert_array_equal(lifted.boundary[4:8, 2:], np.tile([1.0, 0.0], (4, 1)))
        np.testing.assert_array_equal(lifted.boundary[8:, 2:], np.tile([0.5, 0.5], (4, 1)))

    def test_reproduces_all_three_shapes(self):
        a = phantoms.circle_constraints(0.3, n=12, offset=0.05, center=(0.3, 0.5))
        b = phantoms.circle_constraints(0.3, n=12, offset=0.05, center=(0.7, 0.5))
        c = phantoms.ellipse_constraints(0.35, 0.15, n=12, offset=0.05, center=(0.5, 0.5))
        m = morph.build_influence(a, b, c)
        assert m.is_influence
        assert m.model.kernel.value == "r2logr"
        for s, (ps, pt) in zip((a, b, c), morph.DEFAULT_PLACEMENT):
            assert np.abs(morph.influence_slice(m, ps, pt)(s.boundary)).max() <= 1e-5

    def test_three_dimensional_shapes(self):
        def ball(radius):
            return cg.points_normals_to_constraints(phantoms.sphere_cloud(40, radius), k=0.05)

        a, b, c = ball(0.5), ball(1.0), ball(0.75).scaled(1.0, offset=(0.2, 0.0, 0.0))
        m = morph.build_influence(a, b, c)
        assert m.model.dim == 5
        for s, (ps, pt) in zip((a, b, c), morph.DEFAULT_PLACEMENT):
            assert np.abs(morph.influence_slice(m, ps, pt)(s.boundary)).max() <= 1e-5

    def test_influence_changes_the_middle(self, unit_grid):
        circle_a = unit_set(phantoms.disk_image(SIZE, 12.0, center=(22.0, 31.5)), 120)
        circle_b = unit_set(phantoms.disk_image(SIZE, 12.0, center=(41.0, 31.5)), 120)
        square = unit_set(phantoms.square_image(SIZE, 16.0), 120)
        m = morph.build_influence(circle_a, circle_b, square)
        plain, pulled = morph.influence_sequence(m, [(0.5, 0.0), (0.5, 0.25)], 2, unit_grid)
        assert len(plain) > 0 and len(pulled) > 0
        assert extract.hausdorff(plain, pulled, step=0.1 * PIXEL) > PIXEL

    def test_without_third_shape_matches_pair_morph(self):
        a = phantoms.circle_constraints(0.3, n=12, offset=0.05, center=(0.4, 0.5))
        b = phantoms.ellipse_constraints(0.35, 0.2, n=12, offset=0.05, center=(0.6, 0.5))
        placement = morph.InfluencePlacement(((0.0, 0.0), (1.0, 0.0), (0.5, 0.5)))
        inf = morph.build_influence(a, b, None, placement, kernel="r3")
        pair = morph.build_morph(a, b, 1.0, kernel="r3")
        pts = np.random.default_rng(7).random((50, 2))
        for s in (0.0, 0.3, 0.5, 1.0):
            np.testing.assert_allclose(morph.influence_slice(inf, s, 0.0)(pts), morph.slice_at(pair, s)(pts), atol=1e-6)
            np.testing.assert_allclose(morph.influence_slice(inf, s, 0.4)(pts), morph.influence_slice(inf, s, -0.4)(pts),
                                       atol=1e-9)

    def test_influence_slice_needs_four_dimensions(self, xo_morph):
        with pytest.raises(DimensionMismatchError):
            morph.influence_slice(xo_morph, 0.5, 0.0)

    def test_sample_path(self):
        path = morph.sample_path([(0.0, 0.0), (1.0, 0.0), (1.0, 1.0)], 5)
        np.testing.assert_allclose(path, [(0, 0), (0.5, 0), (1, 0), (1, 0.5), (1, 1)])
        assert morph.sample_path([(0.3, 0.3)], 3) == [(0.3, 0.3)] * 3
        with pytest.raises(InvalidParameterError):
            morph.sample_path([(0, 0), (1, 0)], 1)
