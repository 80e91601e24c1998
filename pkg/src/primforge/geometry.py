"""Superquadric geometry: implicit function, poses, radial distance, sampling.

All point arrays are ``(N, 3)`` float arrays in row-vector convention.
Rotations use intrinsic X-then-Y-then-Z Euler angles, ``R = Rx @ Ry @ Rz``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

EPS_MIN = 0.05
EPS_MAX = 6.0

# Order of the flat parameter vector used by the optimizers and the codec.
PARAM_NAMES = ("eps1", "eps2", "a", "b", "c", "rx", "ry", "rz", "tx", "ty", "tz")


def wrap_angle(x):
    """Wrap angles into (-pi, pi]; values already in range are returned untouched."""
    x = np.asarray(x, dtype=float)
    out = np.pi - np.mod(np.pi - x, 2.0 * np.pi)
    return np.where((x > -np.pi) & (x <= np.pi), x, out)


def spow(x, e):
    """Signed power ``sign(x) * |x|**e``."""
    return np.sign(x) * np.abs(x) ** e


def euler_to_matrix(angles) -> np.ndarray:
    rx, ry, rz = (float(v) for v in angles)
    cx, sx = np.cos(rx), np.sin(rx)
    cy, sy = np.cos(ry), np.sin(ry)
    cz, sz = np.cos(rz), np.sin(rz)
    rot_x = np.array([[1.0, 0.0, 0.0], [0.0, cx, -sx], [0.0, sx, cx]])
    rot_y = np.array([[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]])
    rot_z = np.array([[cz, -sz, 0.0], [sz, cz, 0.0], [0.0, 0.0, 1.0]])
    return rot_x @ rot_y @ rot_z


def matrix_to_euler(rot) -> np.ndarray:
    """Inverse of :func:`euler_to_matrix` (gimbal lock resolved with rz = 0)."""
    rot = np.asarray(rot, dtype=float)
    sy = float(np.clip(rot[0, 2], -1.0, 1.0))
    ry = np.arcsin(sy)
    if abs(sy) < 1.0 - 1e-12:
        rx = np.arctan2(-rot[1, 2], rot[2, 2])
        rz = np.arctan2(-rot[0, 1], rot[0, 0])
    else:
        rx = np.arctan2(rot[2, 1], rot[1, 1])
        rz = 0.0
    return wrap_angle(np.array([rx, ry, rz]))


@dataclass(frozen=True)
class Pose:
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        if not np.allclose(rot.T @ rot, np.eye(3), atol=1e-9) or abs(np.linalg.det(rot) - 1.0) > 1e-9:
            raise ValueError("rotation must be orthonormal with det +1")
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=float).reshape(3))

    def apply(self, points):
        return np.asarray(points, dtype=float) @ self.rotation.T + self.translation

    def inverse_apply(self, points):
        return (np.asarray(points, dtype=float) - self.translation) @ self.rotation


@dataclass(frozen=True)
class SuperquadricParams:
    """Shape exponents, semi-axes, Euler rotation and translation of one superquadric."""

    eps1: float
    eps2: float
    size: tuple = (1.0, 1.0, 1.0)
    rotation: tuple = (0.0, 0.0, 0.0)
    translation: tuple = (0.0, 0.0, 0.0)
    _matrix: np.ndarray = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (self.eps1 > 0 and self.eps2 > 0):
            raise ValueError(f"shape exponents must be positive, got {self.eps1}, {self.eps2}")
        size = tuple(float(v) for v in self.size)
        if len(size) != 3 or min(size) <= 0:
            raise ValueError(f"size must hold three positive extents, got {self.size}")
        object.__setattr__(self, "eps1", float(self.eps1))
        object.__setattr__(self, "eps2", float(self.eps2))
        object.__setattr__(self, "size", size)
        object.__setattr__(self, "rotation", tuple(float(v) for v in wrap_angle(np.asarray(self.rotation, float))))
        object.__setattr__(self, "translation", tuple(float(v) for v in self.translation))
        object.__setattr__(self, "_matrix", euler_to_matrix(self.rotation))

    @property
    def rotation_matrix(self) -> np.ndarray:
        return self._matrix.copy()

    @property
    def pose(self) -> Pose:
        return Pose(self._matrix, np.array(self.translation))

    def to_vector(self) -> np.ndarray:
        return np.array([self.eps1, self.eps2, *self.size, *self.rotation, *self.translation])

    @classmethod
    def from_vector(cls, v) -> "SuperquadricParams":
        v = np.asarray(v, dtype=float)
        return cls(v[0], v[1], tuple(v[2:5]), tuple(v[5:8]), tuple(v[8:11]))

    @classmethod
    def from_pose(cls, eps1, eps2, size, rotation_matrix, translation) -> "SuperquadricParams":
        return cls(eps1, eps2, tuple(size), tuple(matrix_to_euler(rotation_matrix)), tuple(translation))

    def replace(self, **changes) -> "SuperquadricParams":
        fields = dict(eps1=self.eps1, eps2=self.eps2, size=self.size,
                      rotation=self.rotation, translation=self.translation)
        fields.update(changes)
        return SuperquadricParams(**fields)

    def clipped(self, min_size=0.0) -> "SuperquadricParams":
        """Copy with exponents clamped to [EPS_MIN, EPS_MAX] and sizes floored."""
        lo = max(min_size, 1e-12)
        return self.replace(eps1=float(np.clip(self.eps1, EPS_MIN, EPS_MAX)),
                            eps2=float(np.clip(self.eps2, EPS_MIN, EPS_MAX)),
                            size=tuple(max(s, lo) for s in self.size))


def _as_points(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    return p.reshape(1, 3) if p.ndim == 1 else p


def to_local(points, params: SuperquadricParams) -> np.ndarray:
    """World points into the superquadric frame, ``R^T (p - T)``."""
    p = np.asarray(points, dtype=float)
    return (p - np.asarray(params.translation)) @ params._matrix


def to_world(points, params: SuperquadricParams) -> np.ndarray:
    p = np.asarray(points, dtype=float)
    return p @ params._matrix.T + np.asarray(params.translation)


def eval_implicit(points, params: SuperquadricParams):
    """Inside-outside function: < 1 inside, 1 on the surface, > 1 outside.

    ``points`` are in the local frame. Scalar input gives a scalar.
    """
    scalar = np.asarray(points).ndim == 1
    p = _as_points(points)
    a, b, c = params.size
    e1, e2 = params.eps1, params.eps2
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        xy = np.abs(p[:, 0] / a) ** (2.0 / e2) + np.abs(p[:, 1] / b) ** (2.0 / e2)
        f = xy ** (e2 / e1) + np.abs(p[:, 2] / c) ** (2.0 / e1)
    f = np.where(np.isnan(f), np.inf, f)
    return float(f[0]) if scalar else f


def radial_signed_distance(points, params: SuperquadricParams, truncation: float):
    """Truncated radial distance ``|p| (1 - F**(-eps1/2))`` of world points.

    Exact for spheres; for other shapes it measures along the ray through the
    superquadric center, so it overestimates Euclidean distance where the
    surface is oblique to that ray.
    """
    scalar = np.asarray(points).ndim == 1
    local = to_local(_as_points(points), params)
    r = np.linalg.norm(local, axis=1)
    f = eval_implicit(local, params)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        d = r * (1.0 - f ** (-params.eps1 / 2.0))
    d = np.where(r == 0.0, -min(params.size), d)
    d = np.where(np.isnan(d), -min(params.size), d)
    d = np.clip(d, -truncation, truncation)
    return float(d[0]) if scalar else d


def parametric_surface(params: SuperquadricParams, eta, omega, world=True):
    """Surface points and outward unit normals at latitude ``eta`` / longitude ``omega``."""
    eta = np.asarray(eta, dtype=float).ravel()
    omega = np.asarray(omega, dtype=float).ravel()
    a, b, c = params.size
    e1, e2 = params.eps1, params.eps2
    ce, se = np.cos(eta), np.sin(eta)
    co, so = np.cos(omega), np.sin(omega)
    pts = np.column_stack([
        a * spow(ce, e1) * spow(co, e2),
        b * spow(ce, e1) * spow(so, e2),
        c * spow(se, e1),
    ])
    # Bases are floored so cusps of star shapes stay finite.
    tiny = 1e-12

    def fpow(x, e):
        return np.sign(x) * np.maximum(np.abs(x), tiny) ** e

    nrm = np.column_stack([
        fpow(ce, 2 - e1) * fpow(co, 2 - e2) / a,
        fpow(ce, 2 - e1) * fpow(so, 2 - e2) / b,
        fpow(se, 2 - e1) / c,
    ])
    length = np.linalg.norm(nrm, axis=1, keepdims=True)
    bad = ~np.isfinite(length[:, 0]) | (length[:, 0] == 0)
    if np.any(bad):
        radial = pts[bad] / np.maximum(np.linalg.norm(pts[bad], axis=1, keepdims=True), tiny)
        nrm[bad] = radial
        length[bad] = 1.0
    nrm = nrm / length
    if world:
        pts = to_world(pts, params)
        nrm = nrm @ params._matrix.T
    return pts, nrm


def sample_surface(params: SuperquadricParams, n: int, seed: int = 0):
    """``n`` random surface points with outward unit normals, in world frame."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    eta = rng.uniform(-np.pi / 2, np.pi / 2, n)
    omega = rng.uniform(-np.pi, np.pi, n)
    return parametric_surface(params, eta, omega)


def inside(points, params: SuperquadricParams) -> np.ndarray:
    """Boolean inside test (``f <= 1``) for world points."""
    return eval_implicit(to_local(_as_points(points), params), params) <= 1.0
