"""Triangle meshes: container, OBJ I/O, surface sampling and point-triangle distance."""

from __future__ import annotations

import io
import os
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateMesh, ParseError


@dataclass
class TriangleMesh:
    vertices: np.ndarray
    faces: np.ndarray
    normals: np.ndarray | None = None

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if self.faces.size and (self.faces.min() < 0 or self.faces.max() >= len(self.vertices)):
            raise ValueError("face index out of range")
        if self.normals is not None:
            self.normals = np.asarray(self.normals, dtype=float).reshape(-1, 3)
            if len(self.normals) != len(self.vertices):
                raise ValueError("need one normal per vertex")

    @property
    def triangles(self) -> np.ndarray:
        """``(F, 3, 3)`` corner coordinates."""
        return self.vertices[self.faces]

    def face_normals(self) -> np.ndarray:
        tri = self.triangles
        n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        length = np.linalg.norm(n, axis=1, keepdims=True)
        return n / np.where(length > 0, length, 1.0)

    def face_areas(self) -> np.ndarray:
        tri = self.triangles
        return 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)

    def bounds(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def transformed(self, fn) -> "TriangleMesh":
        """Copy with vertices mapped through ``fn``; normals are kept."""
        normals = None if self.normals is None else self.normals.copy()
        return TriangleMesh(fn(self.vertices), self.faces.copy(), normals)

    @staticmethod
    def concatenate(meshes) -> "TriangleMesh":
        meshes = list(meshes)
        if not meshes:
            return TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), np.int64))
        offsets = np.cumsum([0] + [len(m.vertices) for m in meshes[:-1]])
        verts = np.concatenate([m.vertices for m in meshes])
        faces = np.concatenate([m.faces + o for m, o in zip(meshes, offsets)])
        normals = None
        if all(m.normals is not None for m in meshes):
            normals = np.concatenate([m.normals for m in meshes])
        return TriangleMesh(verts, faces, normals)


# ---------------------------------------------------------------------------
# OBJ
# ---------------------------------------------------------------------------

def _parse_index(token: str, count: int, lineno: int) -> int:
    try:
        idx = int(token)
    except ValueError:
        raise ParseError(f"bad index {token!r}", lineno) from None
    if idx == 0:
        raise ParseError("index 0 is invalid in OBJ", lineno)
    idx = idx - 1 if idx > 0 else count + idx
    return idx


def parse_obj(text: str) -> TriangleMesh:
    verts, vnormals, faces, corner_normals = [], [], [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tag, *rest = line.split()
        if tag in ("v", "vn"):
            if len(rest) < 3:
                raise ParseError(f"{tag} needs 3 coordinates", lineno)
            try:
                xyz = [float(t) for t in rest[:3]]
            except ValueError:
                raise ParseError(f"bad number in {tag} line", lineno) from None
            (verts if tag == "v" else vnormals).append(xyz)
        elif tag == "f":
            if len(rest) < 3:
                raise ParseError("face needs at least 3 vertices", lineno)
            vi, ni = [], []
            for tok in rest:
                parts = tok.split("/")
                if len(parts) > 3 or not parts[0]:
                    raise ParseError(f"bad face token {tok!r}", lineno)
                v = _parse_index(parts[0], len(verts), lineno)
                if not 0 <= v < len(verts):
                    raise ParseError(f"vertex index {parts[0]} out of range", lineno)
                vi.append(v)
                if len(parts) == 3 and parts[2]:
                    n = _parse_index(parts[2], len(vnormals), lineno)
                    if not 0 <= n < len(vnormals):
                        raise ParseError(f"normal index {parts[2]} out of range", lineno)
                    ni.append(n)
                else:
                    ni.append(-1)
            for k in range(1, len(vi) - 1):
                faces.append((vi[0], vi[k], vi[k + 1]))
                corner_normals.append((ni[0], ni[k], ni[k + 1]))
        # other tags (vt, o, g, s, usemtl, mtllib) carry no geometry
    vertices = np.array(verts, dtype=float).reshape(-1, 3)
    faces_arr = np.array(faces, dtype=np.int64).reshape(-1, 3)
    normals = None
    if vnormals:
        vn = np.array(vnormals, dtype=float)
        cn = np.array(corner_normals, dtype=np.int64).reshape(-1, 3)
        per_vertex = np.full((len(vertices), 3), np.nan)
        has = cn >= 0
        per_vertex[faces_arr[has]] = vn[cn[has]]
        if not np.isnan(per_vertex).any():
            normals = per_vertex
    return TriangleMesh(vertices, faces_arr, normals)


def read_obj(path) -> TriangleMesh:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_obj(fh.read())


def format_obj(mesh: TriangleMesh) -> str:
    buf = io.StringIO()
    np.savetxt(buf, mesh.vertices, fmt="v %.9g %.9g %.9g")
    if mesh.normals is not None:
        np.savetxt(buf, mesh.normals, fmt="vn %.9g %.9g %.9g")
        f = mesh.faces + 1
        np.savetxt(buf, np.repeat(f, 2, axis=1), fmt="f %d//%d %d//%d %d//%d")
    else:
        np.savetxt(buf, mesh.faces + 1, fmt="f %d %d %d")
    return buf.getvalue()


def write_obj(mesh: TriangleMesh, path) -> int:
    """Write ``mesh`` as OBJ and return the file size in bytes."""
    text = format_obj(mesh)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
    return os.path.getsize(path)


# ---------------------------------------------------------------------------
# Sampling and distance
# ---------------------------------------------------------------------------

def sample_mesh(mesh: TriangleMesh, n: int, seed: int = 0):
    """Area-weighted uniform surface samples with their face normals."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if len(mesh.faces) == 0:
        raise DegenerateMesh("mesh has no faces")
    areas = mesh.face_areas()
    total = areas.sum()
    if not total > 0:
        raise DegenerateMesh("mesh has zero surface area")
    rng = np.random.default_rng(seed)
    face = rng.choice(len(areas), size=n, p=areas / total)
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    tri = mesh.triangles[face]
    pts = ((1 - r1)[:, None] * tri[:, 0] + (r1 * (1 - r2))[:, None] * tri[:, 1]
           + (r1 * r2)[:, None] * tri[:, 2])
    return pts, mesh.face_normals()[face]


def closest_point_on_triangles(p, a, b, c) -> np.ndarray:
    """Closest point to ``p[i]`` on triangle ``(a[i], b[i], c[i])``, row-wise."""
    ab, ac, ap = b - a, c - a, p - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)
    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4
    with np.errstate(divide="ignore", invalid="ignore"):
        v_ab = (d1 / (d1 - d3))[:, None]
        w_ac = (d2 / (d2 - d6))[:, None]
        w_bc = ((d4 - d3) / ((d4 - d3) + (d5 - d6)))[:, None]
        denom = va + vb + vc
        v_in = (vb / denom)[:, None]
        w_in = (vc / denom)[:, None]
    conds = [
        (d1 <= 0) & (d2 <= 0),
        (d3 >= 0) & (d4 <= d3),
        (vc <= 0) & (d1 >= 0) & (d3 <= 0),
        (d6 >= 0) & (d5 <= d6),
        (vb <= 0) & (d2 >= 0) & (d6 <= 0),
        (va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0),
    ]
    choices = [a, b, a + v_ab * ab, c, a + w_ac * ac, b + w_bc * (c - b)]
    out = np.select([m[:, None] for m in conds], choices, default=a + v_in * ab + w_in * ac)
    bad = ~np.isfinite(out).all(axis=1)
    if np.any(bad):
        # degenerate triangles: fall back to the nearest corner
        corners = np.stack([a[bad], b[bad], c[bad]], axis=1)
        k = np.argmin(np.linalg.norm(corners - p[bad][:, None], axis=2), axis=1)
        out[bad] = corners[np.arange(len(k)), k]
    return out


def point_triangle_distance(p, a, b, c) -> np.ndarray:
    return np.linalg.norm(p - closest_point_on_triangles(p, a, b, c), axis=1)


def point_mesh_distance(points, mesh: TriangleMesh, chunk: int = 2_000_000) -> np.ndarray:
    """Exact unsigned distance from each point to the mesh (brute force over faces)."""
    points = np.asarray(points, dtype=float)
    tri = mesh.triangles
    out = np.full(len(points), np.inf)
    step = max(1, chunk // max(1, len(tri)))
    for s in range(0, len(points), step):
        p = points[s:s + step]
        pp = np.repeat(p, len(tri), axis=0)
        t = np.tile(tri, (len(p), 1, 1))
        d = point_triangle_distance(pp, t[:, 0], t[:, 1], t[:, 2]).reshape(len(p), len(tri))
        out[s:s + step] = d.min(axis=1)
    return out


# ---------------------------------------------------------------------------
# Simple analytic meshes
# ---------------------------------------------------------------------------

def box_mesh(lo, hi) -> TriangleMesh:
    """Axis-aligned box with outward-facing triangles."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    corners = np.array([[(hi if (i >> k) & 1 else lo)[k] for k in range(3)] for i in range(8)])
    faces = np.array([
        [0, 2, 1], [1, 2, 3],  # z = lo
        [4, 5, 6], [5, 7, 6],  # z = hi
        [0, 1, 4], [1, 5, 4],  # y = lo
        [2, 6, 3], [3, 6, 7],  # y = hi
        [0, 4, 2], [2, 4, 6],  # x = lo
        [1, 3, 5], [3, 7, 5],  # x = hi
    ])
    return TriangleMesh(corners, faces)


def icosphere(radius: float = 1.0, subdivisions: int = 3, center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    t = (1.0 + 5 ** 0.5) / 2.0
    verts = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0), (0, -1, t), (0, 1, t),
             (0, -1, -t), (0, 1, -t), (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
             (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
             (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    verts = [np.array(v, float) / np.linalg.norm(v) for v in verts]
    for _ in range(subdivisions):
        cache = {}

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new_faces = []
        for i, j, k in faces:
            a, b, c = midpoint(i, j), midpoint(j, k), midpoint(k, i)
            new_faces += [(i, a, c), (j, b, a), (k, c, b), (a, b, c)]
        faces = new_faces
    unit = np.array(verts)
    return TriangleMesh(unit * radius + np.asarray(center, float), np.array(faces), unit.copy())
