"""Triangle meshes from superquadrics and parameterized primitive models."""

from __future__ import annotations

import numpy as np

from .errors import InvalidModel
from .geometry import SuperquadricParams, parametric_surface
from .mesh import TriangleMesh
from .primitives import (PrimitiveModel, PrimitiveRecord, ZClass, cap_points, primitive_surface_point,
                         record_inside)


def _grid_faces(rows: int, cols: int, offset: int = 0) -> np.ndarray:
    """Faces of a ``rows x cols`` vertex grid, periodic along columns."""
    i, j = np.meshgrid(np.arange(rows - 1), np.arange(cols), indexing="ij")
    i, j = i.ravel(), j.ravel()
    jn = (j + 1) % cols
    v00 = i * cols + j
    v01 = i * cols + jn
    v10 = (i + 1) * cols + j
    v11 = (i + 1) * cols + jn
    return np.concatenate([np.column_stack([v00, v01, v10]),
                           np.column_stack([v01, v11, v10])]) + offset


def _fan(center: int, ring: np.ndarray, outward_first: bool) -> np.ndarray:
    nxt = np.roll(ring, -1)
    c = np.full(len(ring), center)
    return np.column_stack([c, ring, nxt]) if outward_first else np.column_stack([c, nxt, ring])


def _closed_grid(pts, nrm, tess, bottom_pole, top_pole):
    """Side grid with the first/last rows collapsed to pole vertices."""
    rows = tess - 2
    body_p = pts[tess:tess * (tess - 1)]
    body_n = nrm[tess:tess * (tess - 1)]
    verts = np.concatenate([body_p, [bottom_pole[0]], [top_pole[0]]])
    normals = np.concatenate([body_n, [bottom_pole[1]], [top_pole[1]]])
    bot = rows * tess
    top = bot + 1
    faces = [_grid_faces(rows, tess)] if rows > 1 else []
    faces.append(_fan(bot, np.arange(tess), outward_first=False))
    faces.append(_fan(top, np.arange((rows - 1) * tess, rows * tess), outward_first=True))
    return TriangleMesh(verts, np.concatenate(faces), normals)


def tessellate_superquadric(params: SuperquadricParams, tess: int = 100) -> TriangleMesh:
    """Mesh over a ``tess x tess`` (latitude, longitude) grid with pole vertices."""
    if tess < 4:
        raise ValueError("tess must be >= 4")
    eta = np.linspace(-np.pi / 2, np.pi / 2, tess)
    omega = -np.pi + 2 * np.pi * np.arange(tess) / tess
    E, O = np.meshgrid(eta, omega, indexing="ij")
    pts, nrm = parametric_surface(params, E, O)
    bottom = parametric_surface(params, [-np.pi / 2], [0.0])
    top = parametric_surface(params, [np.pi / 2], [0.0])
    return _closed_grid(pts, nrm, tess, (bottom[0][0], bottom[1][0]), (top[0][0], top[1][0]))


def tessellate_record(rec: PrimitiveRecord, tess: int = 100) -> TriangleMesh:
    """Mesh of one canonical primitive; cylinders get flat fan caps."""
    if tess < 4:
        raise ValueError("tess must be >= 4")
    psi = -np.pi + 2 * np.pi * np.arange(tess) / tess
    u = np.linspace(-1.0, 1.0, tess)
    U, P = np.meshgrid(u, psi, indexing="ij")
    pts, nrm = primitive_surface_point(rec, P, U)
    if rec.shape_class.z_class != ZClass.CYLINDER:
        bottom = primitive_surface_point(rec, [0.0], [-1.0])
        top = primitive_surface_point(rec, [0.0], [1.0])
        return _closed_grid(pts, nrm, tess, (bottom[0][0], bottom[1][0]), (top[0][0], top[1][0]))

    side = TriangleMesh(pts, _grid_faces(tess, tess), nrm)
    rot = rec.params.rotation_matrix
    caps = []
    for is_top in (False, True):
        local, cap_n = cap_points(rec.shape_class, rec.params, np.append(psi, 0.0),
                                  np.append(np.ones(tess), 0.0), is_top)
        world = local @ rot.T + np.asarray(rec.params.translation)
        faces = _fan(tess, np.arange(tess), outward_first=is_top)
        caps.append(TriangleMesh(world, faces, cap_n @ rot.T))
    return TriangleMesh.concatenate([side] + caps)


def _drop_vertices(mesh: TriangleMesh, keep: np.ndarray) -> TriangleMesh:
    remap = np.full(len(mesh.vertices), -1)
    remap[keep] = np.arange(int(keep.sum()))
    faces = remap[mesh.faces]
    faces = faces[(faces >= 0).all(axis=1)]
    normals = None if mesh.normals is None else mesh.normals[keep]
    return TriangleMesh(mesh.vertices[keep], faces, normals)


def tessellate_model(model: PrimitiveModel, tess: int = 100, remove_interior: bool = False,
                     denormalize: bool = False) -> TriangleMesh:
    """Concatenate per-primitive meshes (a triangle soup union).

    ``remove_interior`` drops vertices strictly inside another primitive.
    ``denormalize`` maps vertices back through the model's normalization.
    """
    if not model.primitives:
        raise InvalidModel("InvalidModel: model has no primitives")
    parts = [tessellate_record(rec, tess) for rec in model.primitives]
    if remove_interior and len(parts) > 1:
        trimmed = []
        for k, part in enumerate(parts):
            hidden = np.zeros(len(part.vertices), dtype=bool)
            for j, other in enumerate(model.primitives):
                if j != k:
                    hidden |= record_inside(other, part.vertices, strict=True)
            trimmed.append(_drop_vertices(part, ~hidden))
        parts = trimmed
    mesh = TriangleMesh.concatenate(parts)
    if denormalize and model.normalization is not None:
        mesh = mesh.transformed(model.normalization.invert)
    return mesh
