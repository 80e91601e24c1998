import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial import cKDTree

from primforge.geometry import (Pose, SuperquadricParams, euler_to_matrix, eval_implicit, inside,
                                matrix_to_euler, parametric_surface, radial_signed_distance, sample_surface,
                                to_local, to_world, wrap_angle)

eps_st = st.floats(0.2, 4.0)
size_st = st.floats(0.1, 1.0)
angle_st = st.floats(-np.pi, np.pi)
coord_st = st.floats(-1.0, 1.0)


@st.composite
def superquadrics(draw):
    return SuperquadricParams(draw(eps_st), draw(eps_st),
                              (draw(size_st), draw(size_st), draw(size_st)),
                              (draw(angle_st), draw(angle_st), draw(angle_st)),
                              (draw(coord_st), draw(coord_st), draw(coord_st)))


UNIT_SPHERE = SuperquadricParams(1.0, 1.0, (1.0, 1.0, 1.0))


class TestEvalImplicit:
    @pytest.mark.parametrize("eps", [(0.1, 0.1), (1.0, 1.0), (0.5, 3.0), (4.0, 0.3)])
    def test_x_axis_point_is_on_surface(self, eps):
        sq = SuperquadricParams(*eps, (0.3, 0.7, 0.2))
        assert eval_implicit(np.array([0.3, 0.0, 0.0]), sq) == pytest.approx(1.0, abs=1e-12)

    def test_center_is_zero(self):
        assert eval_implicit(np.zeros(3), SuperquadricParams(0.7, 2.0, (0.3, 0.4, 0.5))) == 0.0

    def test_unit_exponents_reduce_to_quadratic(self):
        assert eval_implicit(np.array([0.5, 0.5, 0.5]), UNIT_SPHERE) == pytest.approx(0.75, abs=1e-15)

    def test_negative_coordinates_use_absolute_values(self):
        sq = SuperquadricParams(0.7, 1.3, (0.5, 0.4, 0.3))
        p = np.array([[0.2, -0.1, 0.05], [-0.2, 0.1, -0.05]])
        f = eval_implicit(p, sq)
        assert np.all(np.isfinite(f))
        assert f[0] == f[1]

    def test_vectorized_shape(self):
        assert eval_implicit(np.zeros((7, 3)), UNIT_SPHERE).shape == (7,)


class TestFrames:
    def test_identity_pose(self):
        npt.assert_array_equal(to_local(np.array([[1.0, 2.0, 3.0]]), UNIT_SPHERE), [[1.0, 2.0, 3.0]])

    def test_translation_only(self):
        sq = UNIT_SPHERE.replace(translation=(1.0, 0.0, 0.0))
        npt.assert_allclose(to_local(np.array([[1.0, 0.0, 0.0]]), sq), [[0.0, 0.0, 0.0]], atol=0)

    def test_rz_quarter_turn(self):
        sq = UNIT_SPHERE.replace(rotation=(0.0, 0.0, np.pi / 2))
        npt.assert_allclose(to_local(np.array([[0.0, 1.0, 0.0]]), sq), [[1.0, 0.0, 0.0]], atol=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(superquadrics())
    def test_round_trip(self, sq):
        p = np.random.default_rng(0).uniform(-2, 2, (20, 3))
        npt.assert_allclose(to_world(to_local(p, sq), sq), p, atol=1e-12)

    def test_euler_is_intrinsic_xyz(self):
        rx, ry, rz = 0.3, -0.4, 1.1
        rot = euler_to_matrix((rx, ry, rz))
        expected = (euler_to_matrix((rx, 0, 0)) @ euler_to_matrix((0, ry, 0)) @ euler_to_matrix((0, 0, rz)))
        npt.assert_allclose(rot, expected, atol=1e-15)

    @settings(max_examples=100, deadline=None)
    @given(angle_st, st.floats(-1.5, 1.5), angle_st)
    def test_matrix_to_euler_inverts(self, rx, ry, rz):
        rot = euler_to_matrix((rx, ry, rz))
        npt.assert_allclose(euler_to_matrix(matrix_to_euler(rot)), rot, atol=1e-9)

    def test_gimbal_lock(self):
        rot = euler_to_matrix((0.4, np.pi / 2, 0.3))
        npt.assert_allclose(euler_to_matrix(matrix_to_euler(rot)), rot, atol=1e-9)

    def test_wrap_angle_range(self):
        x = np.linspace(-20, 20, 1001)
        w = wrap_angle(x)
        assert np.all(w > -np.pi) and np.all(w <= np.pi)
        npt.assert_allclose(np.cos(w), np.cos(x), atol=1e-12)
        assert wrap_angle(-np.pi) == pytest.approx(np.pi)

    def test_wrap_angle_leaves_in_range_values_bitwise(self):
        x = np.array([0.1234567890123, -3.1, np.pi])
        npt.assert_array_equal(wrap_angle(x), x)

    def test_pose_rejects_non_orthonormal(self):
        with pytest.raises(ValueError):
            Pose(np.diag([1.0, 1.0, 1.1]), np.zeros(3))
        with pytest.raises(ValueError):
            Pose(np.diag([1.0, 1.0, -1.0]), np.zeros(3))

    def test_pose_matches_params(self):
        sq = SuperquadricParams(1, 1, (1, 1, 1), (0.1, 0.2, 0.3), (1, 2, 3))
        p = np.random.default_rng(1).normal(size=(5, 3))
        npt.assert_allclose(sq.pose.inverse_apply(p), to_local(p, sq), atol=1e-14)
        npt.assert_allclose(sq.pose.apply(p), to_world(p, sq), atol=1e-14)


class TestParams:
    def test_rejects_non_positive(self):
        with pytest.raises(ValueError):
            SuperquadricParams(0.0, 1.0)
        with pytest.raises(ValueError):
            SuperquadricParams(1.0, 1.0, (1.0, -1.0, 1.0))

    def test_vector_round_trip(self):
        sq = SuperquadricParams(0.4, 2.2, (0.1, 0.2, 0.3), (0.5, -0.6, 3.0), (0.7, 0.8, -0.9))
        assert SuperquadricParams.from_vector(sq.to_vector()) == sq

    def test_rotation_is_wrapped(self):
        sq = SuperquadricParams(1, 1, rotation=(4.0, -4.0, 0.0))
        assert all(-np.pi < r <= np.pi for r in sq.rotation)

    def test_clipped(self):
        sq = SuperquadricParams(0.01, 9.0, (1e-5, 1, 1)).clipped(min_size=0.04)
        assert (sq.eps1, sq.eps2) == (0.05, 6.0)
        assert sq.size[0] == 0.04


class TestRadialDistance:
    def test_surface_point_is_zero(self):
        sq = SuperquadricParams(0.6, 1.7, (0.3, 0.5, 0.4), (0.2, 0.1, -0.3), (0.1, 0, 0))
        pts, _ = sample_surface(sq, 200, seed=3)
        npt.assert_allclose(radial_signed_distance(pts, sq, 1.0), 0.0, atol=1e-9)

    def test_exact_for_sphere(self):
        assert radial_signed_distance(np.array([2.0, 0, 0]), UNIT_SPHERE, 10.0) == pytest.approx(1.0)

    def test_clamped(self):
        assert radial_signed_distance(np.array([3.0, 0, 0]), UNIT_SPHERE, 0.5) == 0.5

    def test_center_value(self):
        sq = SuperquadricParams(1.0, 1.0, (0.3, 0.2, 0.4), translation=(0.5, 0.5, 0.5))
        assert radial_signed_distance(np.array([0.5, 0.5, 0.5]), sq, 10.0) == pytest.approx(-0.2)
        assert radial_signed_distance(np.array([0.5, 0.5, 0.5]), sq, 0.1) == pytest.approx(-0.1)

    def test_sphere_against_euclidean(self):
        sq = SuperquadricParams(1.0, 1.0, (0.5, 0.5, 0.5), translation=(0.1, -0.2, 0.3))
        p = np.random.default_rng(2).uniform(-1, 1, (500, 3))
        exact = np.linalg.norm(p - [0.1, -0.2, 0.3], axis=1) - 0.5
        npt.assert_allclose(radial_signed_distance(p, sq, 10.0), exact, atol=1e-12)

    @settings(max_examples=200, deadline=None)
    @given(superquadrics(), st.tuples(coord_st, coord_st, coord_st))
    def test_sign_agrees_with_implicit(self, sq, p):
        p = np.asarray(p)
        f = eval_implicit(to_local(p, sq), sq)
        if abs(f - 1.0) > 1e-9 and np.isfinite(f):
            d = radial_signed_distance(p, sq, 10.0)
            assert np.sign(d) == np.sign(f - 1.0)


class TestSurface:
    @settings(max_examples=50, deadline=None)
    @given(superquadrics(), st.integers(0, 1000))
    def test_samples_lie_on_surface(self, sq, seed):
        pts, nrm = sample_surface(sq, 100, seed)
        f = eval_implicit(to_local(pts, sq), sq)
        npt.assert_allclose(f, 1.0, atol=1e-6)
        npt.assert_allclose(np.linalg.norm(nrm, axis=1), 1.0, atol=1e-12)

    def test_sphere_normals_are_radial(self):
        pts, nrm = sample_surface(UNIT_SPHERE, 500, seed=1)
        npt.assert_allclose(nrm, pts / np.linalg.norm(pts, axis=1, keepdims=True), atol=1e-9)

    def test_deterministic(self):
        sq = SuperquadricParams(0.5, 1.5, (0.2, 0.3, 0.4))
        a = sample_surface(sq, 1000, seed=7)
        b = sample_surface(sq, 1000, seed=7)
        npt.assert_array_equal(a[0], b[0])
        npt.assert_array_equal(a[1], b[1])

    def test_normals_point_outward(self):
        sq = SuperquadricParams(0.7, 1.4, (0.3, 0.4, 0.2), (0.4, 0.1, 0.2), (0.1, 0.1, 0.1))
        pts, nrm = sample_surface(sq, 300, seed=0)
        outside = to_local(pts + 1e-4 * nrm, sq)
        assert np.all(eval_implicit(outside, sq) > 1.0)

    @settings(max_examples=50, deadline=None)
    @given(superquadrics(), st.integers(0, 2**31 - 1))
    def test_rigid_equivariance(self, sq, seed):
        rng = np.random.default_rng(seed)
        q = euler_to_matrix(rng.uniform(-np.pi, np.pi, 3))
        t = rng.uniform(-1, 1, 3)
        p = rng.uniform(-1, 1, (10, 3))
        moved = SuperquadricParams.from_pose(sq.eps1, sq.eps2, sq.size, q @ sq.rotation_matrix,
                                             q @ np.asarray(sq.translation) + t)
        f0 = eval_implicit(to_local(p, sq), sq)
        f1 = eval_implicit(to_local(p @ q.T + t, moved), moved)
        npt.assert_allclose(f1, f0, rtol=1e-9, atol=1e-9)

    @settings(max_examples=50, deadline=None)
    @given(superquadrics(), st.integers(0, 2**31 - 1))
    def test_monotone_along_rays(self, sq, seed):
        d = np.random.default_rng(seed).normal(size=3)
        d /= np.linalg.norm(d)
        s = np.linspace(0.01, 2.0, 200)
        f = eval_implicit(s[:, None] * d, sq)
        assert np.all(np.diff(f) > 0)

    def test_axis_swap_symmetry(self):
        sq = SuperquadricParams(0.7, 1.0, (0.3, 0.5, 0.4))
        swapped = SuperquadricParams(0.7, 1.0, (0.5, 0.3, 0.4), rotation=(0.0, 0.0, np.pi / 2))
        eta = np.linspace(-np.pi / 2, np.pi / 2, 41)
        omega = np.linspace(-np.pi, np.pi, 80, endpoint=False)
        E, O = np.meshgrid(eta, omega)
        a, _ = parametric_surface(sq, E, O)
        b, _ = parametric_surface(swapped, E, O + np.pi / 2)
        # identical as sets: every point of one has a twin in the other
        assert cKDTree(b).query(a)[0].max() <= 1e-6
        assert cKDTree(a).query(b)[0].max() <= 1e-6

    def test_inside(self):
        sq = SuperquadricParams(1.0, 1.0, (0.5, 0.5, 0.5))
        assert inside(np.array([[0.0, 0, 0], [0.6, 0, 0]]), sq).tolist() == [True, False]
