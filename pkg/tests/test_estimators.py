import numpy as np
import numpy.testing as npt
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from primforge import PrimitiveAbstractor, PrimitiveMatcher, SuperquadricDecomposer
from primforge._validation import check_fraction, check_grid, check_points, check_positive
from primforge.geometry import SuperquadricParams
from primforge.mesh import icosphere
from primforge.primitives import ShapeClass, XYClass, ZClass
from primforge.synthetic import sphere_tsdf
from primforge.tsdf import GridSpec, VoxelGrid

SPEC = GridSpec.cube(40)


@pytest.fixture(scope="module")
def two_spheres():
    a = sphere_tsdf((-0.45, 0.0, 0.0), 0.3, SPEC)
    b = sphere_tsdf((0.45, 0.0, 0.0), 0.3, SPEC)
    return VoxelGrid.from_spec(SPEC, np.minimum(a.values, b.values))


@pytest.fixture(scope="module")
def fitted(two_spheres):
    return SuperquadricDecomposer().fit(two_spheres)


class TestParams:
    @pytest.mark.parametrize("cls", [SuperquadricDecomposer, PrimitiveMatcher, PrimitiveAbstractor])
    def test_get_set_clone(self, cls):
        est = cls()
        params = est.get_params()
        assert "max_iters" in params
        est.set_params(max_iters=7)
        assert est.get_params()["max_iters"] == 7
        copy = clone(est)
        assert copy is not est and copy.get_params() == est.get_params()

    def test_abstractor_exposes_all_knobs(self):
        keys = set(PrimitiveAbstractor().get_params())
        assert {"resolution", "truncation_factor", "alpha", "min_voxels", "primitive_set", "n_threads"} <= keys

    @pytest.mark.parametrize("bad", [{"alpha": 1.0}, {"alpha": 0}, {"min_voxels": 0}, {"min_voxels": 2.5},
                                     {"accept_coverage": 1.5}, {"max_primitives": -1}])
    def test_invalid_params_rejected_at_fit(self, bad, two_spheres):
        with pytest.raises(ValueError):
            SuperquadricDecomposer(**bad).fit(two_spheres)

    def test_unknown_primitive_set(self, two_spheres):
        with pytest.raises(ValueError):
            PrimitiveMatcher(primitive_set="cubes").fit([SuperquadricParams(1.0, 1.0)], two_spheres)


class TestDecomposer:
    def test_fit_attributes(self, fitted):
        assert len(fitted.superquadrics_) == 2
        assert len(fitted.fit_results_) == 2
        assert fitted.thresholds_[0] < 0
        assert fitted.n_rejected_ >= 0

    def test_predict(self, fitted):
        labels = fitted.predict([[-0.45, 0, 0], [0.45, 0, 0], [0, 0.9, 0]])
        assert labels[2] == -1
        assert sorted(labels[:2]) == [0, 1]

    def test_transform(self, fitted):
        pts = np.array([[-0.45, 0, 0], [0.45, 0, 0]])
        d = fitted.transform(pts)
        assert d.shape == (2, 2)
        npt.assert_allclose(np.sort(d, axis=1)[:, 0], -0.3, atol=2 * SPEC.voxel_size)

    def test_fit_transform(self, two_spheres):
        d = SuperquadricDecomposer().fit_transform(two_spheres)
        assert d.shape == (SPEC.size, 2)

    def test_accepts_bare_array(self, two_spheres):
        est = SuperquadricDecomposer().fit(two_spheres.values)
        assert len(est.superquadrics_) == 2

    def test_not_fitted(self):
        with pytest.raises(NotFittedError):
            SuperquadricDecomposer().predict([[0, 0, 0]])


class TestMatcher:
    def test_fit_predict_transform(self, fitted, two_spheres):
        m = PrimitiveMatcher().fit(fitted.superquadrics_, two_spheres)
        assert len(m.records_) == 2
        assert all(r.shape_class == ShapeClass(ZClass.CONE, XYClass.ELLIPSE) for r in m.records_)
        npt.assert_array_equal(m.predict([[-0.45, 0, 0], [0.45, 0, 0], [0, 0.9, 0]]) >= 0, [True, True, False])
        assert m.transform(np.zeros((5, 3))).shape == (5, 2)
        assert len(m.replacements_) == 2

    def test_single_superquadric(self, two_spheres):
        m = PrimitiveMatcher(refit=False).fit(SuperquadricParams(1.0, 1.0, (0.3,) * 3, translation=(0.45, 0, 0)),
                                              two_spheres)
        assert len(m.records_) == 1

    def test_needs_grid(self):
        with pytest.raises(ValueError):
            PrimitiveMatcher().fit([SuperquadricParams(1.0, 1.0)])

    def test_rejects_other_types(self, two_spheres):
        with pytest.raises(TypeError):
            PrimitiveMatcher().fit([1, 2], two_spheres)

    def test_not_fitted(self):
        with pytest.raises(NotFittedError):
            PrimitiveMatcher().transform([[0, 0, 0]])


class TestAbstractor:
    def test_mesh_input(self):
        est = PrimitiveAbstractor(resolution=32).fit(icosphere(3.0, 3, (5.0, 0.0, 0.0)))
        assert len(est.model_) == 1
        assert est.normalization_ is not None and est.model_.normalization is est.normalization_
        npt.assert_allclose(est.normalization_.center, (5.0, 0.0, 0.0), atol=1e-9)
        assert est.grid_.dims == (32, 32, 32)
        assert est.predict([[0.0, 0.0, 0.0]])[0] == 0

    def test_grid_input(self, two_spheres):
        est = PrimitiveAbstractor().fit(two_spheres)
        assert len(est.model_) == 2 and est.normalization_ is None


class TestValidation:
    def test_check_grid(self):
        g = check_grid(np.zeros((8, 8, 8)))
        assert g.dims == (8, 8, 8) and g.voxel_size == pytest.approx(0.25)
        with pytest.raises(ValueError):
            check_grid(np.zeros((8, 8, 7)))
        with pytest.raises(ValueError):
            check_grid(np.full((4, 4, 4), np.nan))

    def test_check_points(self):
        assert check_points([1, 2, 3]).shape == (1, 3)
        with pytest.raises(ValueError):
            check_points(np.zeros((4, 2)))
        with pytest.raises(ValueError):
            check_points([[0, 0, np.inf]])

    def test_check_positive(self):
        assert check_positive(3, "n", integer=True) == 3
        for bad in (0, -1, True, "3"):
            with pytest.raises(ValueError):
                check_positive(bad, "n")
        with pytest.raises(ValueError):
            check_positive(1.5, "n", integer=True)

    def test_check_fraction(self):
        assert check_fraction(0.5, "a") == 0.5
        assert check_fraction(0.0, "a", open_low=False) == 0.0
        with pytest.raises(ValueError):
            check_fraction(1.0, "a")
