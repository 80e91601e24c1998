import numpy as np
import numpy.testing as npt
import pytest
from scipy import stats

from primforge.errors import DegenerateMesh, ParseError
from primforge.mesh import (TriangleMesh, box_mesh, closest_point_on_triangles, format_obj, icosphere,
                            parse_obj, point_mesh_distance, read_obj, sample_mesh, write_obj)

CUBE_OBJ = """# unit cube
v 0 0 0
v 1 0 0
v 0 1 0
v 1 1 0
v 0 0 1
v 1 0 1
v 0 1 1
v 1 1 1
f 1 3 2
f 2 3 4
f 5 6 7
f 6 8 7
f 1 2 5
f 2 6 5
f 3 7 4
f 4 7 8
f 1 5 3
f 3 5 7
f 2 4 6
f 4 8 6
"""


def _brute_point_triangle(p, a, b, c, n=300):
    """Dense barycentric sampling of the triangle (upper bound on the distance)."""
    s, t = np.meshgrid(np.linspace(0, 1, n), np.linspace(0, 1, n))
    keep = s + t <= 1
    s, t = s[keep], t[keep]
    q = a + s[:, None] * (b - a) + t[:, None] * (c - a)
    return np.linalg.norm(q - p, axis=1).min()


class TestObj:
    def test_cube_counts(self):
        mesh = parse_obj(CUBE_OBJ)
        assert mesh.vertices.shape == (8, 3)
        assert mesh.faces.shape == (12, 3)

    def test_texture_indices_ignored(self):
        text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nvn 0 0 1\nf 1/1/1 2/1/1 3/1/1\n"
        mesh = parse_obj(text)
        npt.assert_array_equal(mesh.faces, [[0, 1, 2]])
        npt.assert_array_equal(mesh.vertices[1], [1, 0, 0])

    def test_double_slash_and_negative_indices(self):
        mesh = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nf -3//1 -2//1 -1//1\n")
        npt.assert_array_equal(mesh.faces, [[0, 1, 2]])

    def test_polygon_fan(self):
        mesh = parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
        npt.assert_array_equal(mesh.faces, [[0, 1, 2], [0, 2, 3]])

    @pytest.mark.parametrize("bad", ["f 1 2\n", "f 1 2 x\n", "f 1 2 9\n", "v 1 2\n", "f 0 1 2\n"])
    def test_malformed_line(self, bad):
        text = "v 0 0 0\nv 1 0 0\nv 0 1 0\n" + bad
        with pytest.raises(ParseError, match="line 4"):
            parse_obj(text)

    def test_round_trip(self, tmp_path):
        mesh = icosphere(0.37, 2, (0.1, -0.2, 0.3))
        path = tmp_path / "s.obj"
        size = write_obj(mesh, path)
        assert size == path.stat().st_size
        back = read_obj(path)
        npt.assert_allclose(back.vertices, mesh.vertices, atol=1e-8)
        npt.assert_allclose(back.normals, mesh.normals, atol=1e-8)
        npt.assert_array_equal(back.faces, mesh.faces)

    def test_writer_emits_nine_significant_digits(self):
        mesh = TriangleMesh([[1 / 3, 0, 0], [0, 1, 0], [0, 0, 1]], [[0, 1, 2]])
        assert "v 0.333333333 0 0" in format_obj(mesh)

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            read_obj(tmp_path / "none.obj")


class TestMeshBasics:
    def test_rejects_bad_indices(self):
        with pytest.raises(ValueError):
            TriangleMesh(np.zeros((3, 3)), [[0, 1, 3]])

    def test_concatenate_offsets_faces(self):
        a = box_mesh((0, 0, 0), (1, 1, 1))
        b = box_mesh((2, 0, 0), (3, 1, 1))
        both = TriangleMesh.concatenate([a, b])
        assert len(both.vertices) == 16
        npt.assert_array_equal(both.faces[12:], b.faces + 8)

    @pytest.mark.parametrize("mesh", [box_mesh((-1, -1, -1), (1, 2, 3)), icosphere(1.0, 2)])
    def test_analytic_meshes_face_outward(self, mesh):
        centroid = mesh.vertices.mean(axis=0)
        tri_centers = mesh.triangles.mean(axis=1)
        assert np.all(np.einsum("ij,ij->i", mesh.face_normals(), tri_centers - centroid) > 0)

    def test_icosphere_vertices_on_sphere(self):
        m = icosphere(0.5, 3, (1, 2, 3))
        npt.assert_allclose(np.linalg.norm(m.vertices - [1, 2, 3], axis=1), 0.5, atol=1e-12)


class TestSampling:
    def test_uniform_density_on_square(self):
        square = TriangleMesh([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], [[0, 1, 2], [0, 2, 3]])
        pts, _ = sample_mesh(square, 100_000, seed=0)
        counts, _, _ = np.histogram2d(pts[:, 0], pts[:, 1], bins=4, range=[[0, 1], [0, 1]])
        assert stats.chisquare(counts.ravel()).pvalue > 0.01

    def test_samples_inside_triangle(self):
        tri = TriangleMesh([[0, 0, 0], [2, 0, 0], [0, 1, 1]], [[0, 1, 2]])
        pts, nrm = sample_mesh(tri, 5000, seed=3)
        a, b, c = tri.vertices
        m = np.column_stack([b - a, c - a])
        coef, *_ = np.linalg.lstsq(m, (pts - a).T, rcond=None)
        assert np.all(coef >= -1e-12) and np.all(coef.sum(axis=0) <= 1 + 1e-12)
        npt.assert_allclose(np.linalg.norm(nrm, axis=1), 1.0)

    def test_deterministic(self):
        mesh = icosphere(1.0, 1)
        npt.assert_array_equal(sample_mesh(mesh, 100, 5)[0], sample_mesh(mesh, 100, 5)[0])

    def test_degenerate(self):
        with pytest.raises(DegenerateMesh):
            sample_mesh(TriangleMesh(np.zeros((3, 3)), [[0, 1, 2]]), 10)
        with pytest.raises(DegenerateMesh):
            sample_mesh(TriangleMesh(np.zeros((3, 3)), np.zeros((0, 3))), 10)


class TestDistance:
    def test_closest_point_regions(self):
        a, b, c = np.array([0.0, 0, 0]), np.array([1.0, 0, 0]), np.array([0.0, 1, 0])
        cases = {(0.2, 0.2, 1.0): (0.2, 0.2, 0.0),   # face
                 (-1.0, -1.0, 0.0): (0.0, 0.0, 0.0),  # vertex a
                 (0.5, -1.0, 0.0): (0.5, 0.0, 0.0),   # edge ab
                 (1.0, 1.0, 0.0): (0.5, 0.5, 0.0),    # edge bc
                 (3.0, -0.5, 0.0): (1.0, 0.0, 0.0)}   # vertex b
        p = np.array(list(cases))
        q = closest_point_on_triangles(p, np.tile(a, (5, 1)), np.tile(b, (5, 1)), np.tile(c, (5, 1)))
        npt.assert_allclose(q, np.array(list(cases.values())), atol=1e-12)

    def test_against_dense_sampling(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            a, b, c = rng.normal(size=(3, 3))
            p = rng.normal(size=3) * 2
            exact = np.linalg.norm(closest_point_on_triangles(p[None], a[None], b[None], c[None]) - p)
            approx = _brute_point_triangle(p, a, b, c)
            assert exact <= approx + 1e-12
            assert approx - exact < 0.02

    def test_point_mesh_distance_sphere(self):
        m = icosphere(1.0, 4)
        p = np.array([[2.0, 0, 0], [0, 0, 0.5]])
        npt.assert_allclose(point_mesh_distance(p, m), [1.0, 0.5], atol=2e-3)
