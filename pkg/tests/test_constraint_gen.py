import numpy as np
import pytest
from scipy.spatial.distance import directed_hausdorff

from conftest import unit_set
from varimorph import constraint_gen as cg
from varimorph import extract, kernel_core, phantoms
from varimorph.errors import (
    BorderError,
    DimensionMismatchError,
    EmptyShapeError,
    InvalidNormalError,
    InvalidParameterError,
)


def step_image():
    return cg.GrayImage(np.array([[0.0, 255.0], [0.0, 255.0]]))


class TestImageConstraints:
    def test_midpoint_crossing(self):
        cset = cg.image_to_constraints(step_image())
        np.testing.assert_allclose(cset.boundary, [[0.5, 0.0], [0.5, 1.0]])
        # one pixel towards the bright side
        np.testing.assert_allclose(cset.normal, [[1.5, 0.0], [1.5, 1.0]])
        np.testing.assert_array_equal(cset.values, [0, 0, 1, 1])

    def test_crossing_follows_threshold(self):
        cset = cg.image_to_constraints(step_image(), m=63.75)
        np.testing.assert_allclose(cset.boundary[:, 0], 0.25)

    def test_scan_order(self):
        px = np.zeros((4, 4))
        px[1:3, 1:3] = 255.0
        crossings = cg.find_crossings(cg.GrayImage(px), 127.5)
        assert len(crossings) == 8
        ys = crossings[:, 1]
        assert np.all(np.diff(np.floor(ys)) >= 0)

    def test_disk_boundary_on_circle(self):
        img = phantoms.disk_image(64, 20.0)
        cset = cg.image_to_constraints(img)
        c = 31.5
        r_boundary = np.hypot(*(cset.boundary - c).T)
        r_normal = np.hypot(*(cset.normal - c).T)
        assert len(cset.boundary) > 100
        assert np.abs(r_boundary - 20.0).max() <= 0.75
        assert np.all(r_normal < r_boundary)
        np.testing.assert_allclose(np.linalg.norm(cset.normal - cset.boundary, axis=1), 1.0)

    def test_normal_value_and_offset(self):
        cset = cg.image_to_constraints(phantoms.disk_image(32, 8.0), normal_offset=0.5, normal_value=2.0)
        assert cset.normal_value == 2.0
        np.testing.assert_allclose(np.linalg.norm(cset.normal - cset.boundary, axis=1), 0.5)

    def test_stride(self):
        img = phantoms.disk_image(64, 20.0)
        full = cg.image_to_constraints(img)
        strided = cg.image_to_constraints(img, stride=3)
        assert len(strided.boundary) == len(full.boundary[::3])

    def test_constant_image(self):
        with pytest.raises(EmptyShapeError):
            cg.image_to_constraints(cg.GrayImage(np.full((8, 8), 200.0)))

    @pytest.mark.parametrize("kwargs", [{"normal_offset": 0.0}, {"stride": 0}])
    def test_bad_parameters(self, kwargs):
        with pytest.raises(InvalidParameterError):
            cg.image_to_constraints(step_image(), **kwargs)

    def test_pixel_range(self):
        with pytest.raises(InvalidParameterError):
            cg.GrayImage(np.full((4, 4), 300.0))


class TestGradient:
    def test_ramp(self):
        ys, xs = np.mgrid[0:20, 0:20].astype(float)
        img = cg.GrayImage(2.0 * xs + 5.0 * ys)
        for pos in [(5.3, 7.7), (1.0, 1.0), (18.0, 18.0), (10.5, 2.25)]:
            np.testing.assert_allclose(cg.image_gradient(img, pos), [2.0, 5.0], atol=1e-12)

    def test_border(self):
        img = cg.GrayImage(np.zeros((10, 10)))
        with pytest.raises(BorderError):
            cg.image_gradient(img, (0.5, 5.0))
        with pytest.raises(BorderError):
            cg.image_gradient(img, (5.0, 8.5))


class TestPointNormals:
    def test_offset_inwards(self):
        cloud = cg.PointNormalCloud([[0.5, 0.5, 0.5]], [[0.0, 0.0, 1.0]])
        cset = cg.points_normals_to_constraints(cloud, k=0.01)
        np.testing.assert_allclose(cset.boundary, [[0.5, 0.5, 0.5]])
        np.testing.assert_allclose(cset.normal, [[0.5, 0.5, 0.49]])
        assert cset.dim == 3

    def test_sphere_cloud(self):
        cset = cg.points_normals_to_constraints(phantoms.sphere_cloud(100), k=0.05)
        np.testing.assert_allclose(np.linalg.norm(cset.normal, axis=1), 0.95)

    def test_rejects_zero_offset(self):
        with pytest.raises(InvalidParameterError):
            cg.points_normals_to_constraints(phantoms.sphere_cloud(10), k=0.0)

    def test_rejects_non_unit_normals(self):
        cloud = cg.PointNormalCloud([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]], [[0.0, 0.0, 1.0], [0.0, 0.0, 2.0]])
        with pytest.raises(InvalidNormalError, match="index 1"):
            cg.points_normals_to_constraints(cloud)

    def test_mismatched_cloud(self):
        with pytest.raises(DimensionMismatchError):
            cg.PointNormalCloud(np.zeros((3, 3)), np.zeros((2, 3)))


class TestConstraintSet:
    def test_lifted_and_scaled(self):
        cset = phantoms.circle_constraints(2.0, n=8)
        lifted = cset.lifted([0.25, 1.0])
        assert lifted.dim == 4
        np.testing.assert_array_equal(lifted.boundary[:, 2:], np.tile([0.25, 1.0], (8, 1)))
        scaled = cset.scaled(0.5, offset=(1.0, 0.0))
        np.testing.assert_allclose(scaled.boundary, (cset.boundary - [1.0, 0.0]) * 0.5)

    def test_concat_keeps_pairing(self):
        a = phantoms.circle_constraints(1.0, n=4)
        b = phantoms.circle_constraints(2.0, n=6)
        both = cg.ConstraintSet.concat([a, b])
        assert len(both) == 20
        bnd, nrm = both.pairs()
        np.testing.assert_allclose(np.linalg.norm(bnd - nrm, axis=1), 0.1)

    def test_from_constraints(self):
        cset = cg.ConstraintSet.from_constraints((np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
                                                  np.array([0.0, 2.0, 0.0])))
        assert len(cset.boundary) == 2
        assert cset.normal_value == 2.0
        with pytest.raises(InvalidParameterError):
            cg.ConstraintSet.from_constraints((np.eye(3), np.array([0.0, 1.0, 2.0])))

    def test_empty(self):
        empty = cg.ConstraintSet.empty(3)
        assert len(empty) == 0
        assert empty.dim == 3
        assert empty.positions.shape == (0, 3)

    def test_thinning(self):
        cset = cg.image_to_constraints(phantoms.disk_image(64, 20.0))
        thin = cg.thin_constraints(cset, 40)
        assert len(thin.boundary) <= 40
        bnd, nrm = thin.pairs()
        assert len(bnd) == len(thin.boundary)
        np.testing.assert_allclose(np.linalg.norm(bnd - nrm, axis=1), 1.0)
        assert cg.thin_constraints(cset, 10_000) is cset


class TestSignedDistance:
    def test_disk_center(self):
        img = phantoms.disk_image(65, 20.0, center=(32.0, 32.0))
        sdf = cg.signed_distance_field(img)
        assert sdf.values[32, 32] == pytest.approx(20.0, abs=0.5)
        assert sdf.values[0, 0] < 0
        assert sdf.width == 65

    def test_constant_image(self):
        with pytest.raises(EmptyShapeError):
            cg.signed_distance_field(cg.GrayImage(np.zeros((8, 8))))

    def test_cross_has_medial_ridges(self, x_image):
        sdf = cg.signed_distance_field(x_image)
        ridges = cg.medial_ridges(sdf)
        assert ridges.any()
        assert np.all(sdf.values[ridges] > 0)
        # the diagonal centerline of a bar is a ridge
        assert ridges[40, 40] or ridges[40, 41] or ridges[41, 40]


@pytest.mark.parametrize("image", ["disk", "cross"])
def test_solved_contour_reproduces_boundary(image):
    img = phantoms.disk_image(64, 20.0) if image == "disk" else phantoms.cross_image(64)
    cset = unit_set(img)
    model = kernel_core.solve_model(cset)
    lines = extract.extract_zero_set(model, extract.GridSpec(((0.0, 0.0), (1.0, 1.0)), 128))
    dist = directed_hausdorff(cset.boundary, lines.points(0.001))[0]
    assert dist <= 0.5 / 63
