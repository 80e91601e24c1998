"""Shape classes, canonical parameterized primitives, and superquadric replacement.

Each fitted superquadric is classified on two axes by its exponents:
``eps1`` picks the profile along local z (cylinder / cone / star) and
``eps2`` the cross-section in the xy plane (rectangle / ellipse / star).
The lower interval is open at 0.5, the middle one closed [0.5, 2], the upper
one open at 2.

A canonical primitive of class ``(z, xy)`` is the surface

    P(psi, u) = (R(psi) g(u) cos psi, R(psi) g(u) sin psi, c u),  u in [-1, 1]

with cross-section radius ``R`` and profile ``g`` chosen per class; cylinders
are closed with flat caps at ``u = +-1``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import NonPositiveEpsilon
from .geometry import EPS_MAX, EPS_MIN, SuperquadricParams, radial_signed_distance, to_local, to_world
from .optim import levenberg_marquardt
from .tsdf import Normalization, VoxelGrid

LOWER_BREAK = 0.5
UPPER_BREAK = 2.0
_TINY = 1e-12


class ZClass(enum.IntEnum):
    CYLINDER = 0
    CONE = 1
    STAR = 2

    @property
    def label(self) -> str:
        return "Z_" + self.name


class XYClass(enum.IntEnum):
    RECT = 0
    ELLIPSE = 1
    STAR = 2

    @property
    def label(self) -> str:
        return "XY_" + self.name


@dataclass(frozen=True)
class ShapeClass:
    z_class: ZClass
    xy_class: XYClass

    def __post_init__(self):
        object.__setattr__(self, "z_class", ZClass(self.z_class))
        object.__setattr__(self, "xy_class", XYClass(self.xy_class))

    def __str__(self):
        return f"{self.z_class.label}, {self.xy_class.label}"


def _interval(eps) -> np.ndarray:
    eps = np.asarray(eps, dtype=float)
    return np.where(eps < LOWER_BREAK, 0, np.where(eps <= UPPER_BREAK, 1, 2))


def classify(eps1: float, eps2: float) -> ShapeClass:
    if not (eps1 > 0 and eps2 > 0):
        raise NonPositiveEpsilon(f"shape exponents must be positive, got ({eps1}, {eps2})")
    return ShapeClass(ZClass(int(_interval(eps1))), XYClass(int(_interval(eps2))))


def classify_codes(eps1, eps2):
    """Vectorized class codes ``(z_code, xy_code)`` for arrays of exponents."""
    eps1 = np.asarray(eps1, dtype=float)
    eps2 = np.asarray(eps2, dtype=float)
    if np.any(eps1 <= 0) or np.any(eps2 <= 0):
        raise NonPositiveEpsilon("shape exponents must be positive")
    return _interval(eps1), _interval(eps2)


def class_bounds(code: int) -> tuple:
    """Closed float bounds of an exponent interval, clipped to [EPS_MIN, EPS_MAX]."""
    if code == 0:
        return EPS_MIN, float(np.nextafter(LOWER_BREAK, 0.0))
    if code == 1:
        return LOWER_BREAK, UPPER_BREAK
    return float(np.nextafter(UPPER_BREAK, np.inf)), EPS_MAX


def project_eps(eps1: float, eps2: float, shape_class: ShapeClass) -> tuple:
    lo1, hi1 = class_bounds(int(shape_class.z_class))
    lo2, hi2 = class_bounds(int(shape_class.xy_class))
    return float(np.clip(eps1, lo1, hi1)), float(np.clip(eps2, lo2, hi2))


# ---------------------------------------------------------------------------
# Records and models
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PrimitiveRecord:
    shape_class: ShapeClass
    params: SuperquadricParams

    def __post_init__(self):
        if classify(self.params.eps1, self.params.eps2) != self.shape_class:
            raise ValueError(f"exponents ({self.params.eps1}, {self.params.eps2}) "
                             f"do not belong to class {self.shape_class}")

    @classmethod
    def from_superquadric(cls, sq: SuperquadricParams) -> "PrimitiveRecord":
        return cls(classify(sq.eps1, sq.eps2), sq)


@dataclass
class PrimitiveModel:
    primitives: list
    normalization: Normalization | None = None
    version: int = 1

    def __len__(self):
        return len(self.primitives)


# ---------------------------------------------------------------------------
# Canonical surfaces
# ---------------------------------------------------------------------------

def _fpow(x, e):
    return np.maximum(np.abs(x), _TINY) ** e


def cross_section(xy_class, psi, a, b, eps2):
    """Polar radius ``R(psi)`` of the cross-section and its derivative."""
    psi = np.asarray(psi, dtype=float)
    c, s = np.cos(psi), np.sin(psi)
    if xy_class == XYClass.RECT:
        on_x = np.abs(c) / a >= np.abs(s) / b
        cx = np.where(np.abs(c) < _TINY, _TINY, c)
        sx = np.where(np.abs(s) < _TINY, _TINY, s)
        r = np.where(on_x, a / np.abs(cx), b / np.abs(sx))
        dr = np.where(on_x, a * s / (cx * np.abs(cx)), -b * c / (sx * np.abs(sx)))
        return r, dr
    if xy_class == XYClass.ELLIPSE:
        q = b * b * c * c + a * a * s * s
        r = a * b / np.sqrt(q)
        dr = -a * b * (a * a - b * b) * s * c / q ** 1.5
        return r, dr
    e = eps2
    k = 2.0 / e
    S = _fpow(c / a, k) + _fpow(s / b, k)
    dS = k * (_fpow(c / a, k - 1) * np.sign(c) * (-s / a) + _fpow(s / b, k - 1) * np.sign(s) * (c / b))
    r = S ** (-e / 2.0)
    dr = -(e / 2.0) * S ** (-e / 2.0 - 1.0) * dS
    return r, dr


def z_profile(z_class, u, eps1):
    """Profile ``g(u)`` scaling the cross-section at height ``c*u``, and ``g'(u)``."""
    u = np.asarray(u, dtype=float)
    if z_class == ZClass.CYLINDER:
        return np.ones_like(u), np.zeros_like(u)
    e = float(np.clip(eps1, LOWER_BREAK, UPPER_BREAK)) if z_class == ZClass.CONE else float(eps1)
    k = 2.0 / e
    au = np.clip(np.abs(u), 0.0, 1.0)
    base = np.clip(1.0 - au ** k, 0.0, 1.0)
    g = base ** (e / 2.0)
    dg = -_fpow(base, e / 2.0 - 1.0) * _fpow(au, k - 1.0) * np.sign(u)
    return g, dg


def canonical_surface(shape_class: ShapeClass, params: SuperquadricParams, psi, u):
    """Local-frame points and outward unit normals of the canonical side surface."""
    psi, u = np.broadcast_arrays(np.asarray(psi, float), np.asarray(u, float))
    psi = psi.ravel()
    u = u.ravel()
    a, b, c = params.size
    R, dR = cross_section(shape_class.xy_class, psi, a, b, params.eps2)
    g, dg = z_profile(shape_class.z_class, u, params.eps1)
    cp, sp = np.cos(psi), np.sin(psi)
    pts = np.column_stack([R * g * cp, R * g * sp, c * u])
    A = dR * cp - R * sp
    B = dR * sp + R * cp
    nrm = np.column_stack([c * B, -c * A, -R * R * dg])
    if shape_class.z_class != ZClass.CYLINDER:
        pole = np.abs(u) >= 1.0 - 1e-12
        nrm[pole] = np.column_stack([np.zeros(pole.sum()), np.zeros(pole.sum()), np.sign(u[pole])])
    length = np.linalg.norm(nrm, axis=1, keepdims=True)
    bad = ~np.isfinite(length[:, 0]) | (length[:, 0] == 0)
    nrm[bad] = np.column_stack([cp[bad], sp[bad], np.zeros(bad.sum())])
    length[bad] = 1.0
    return pts, nrm / length


def primitive_surface_point(rec: PrimitiveRecord, psi, u):
    """World-frame points and normals on the record's canonical primitive."""
    pts, nrm = canonical_surface(rec.shape_class, rec.params, psi, u)
    rot = rec.params.rotation_matrix
    return to_world(pts, rec.params), nrm @ rot.T


def cap_points(shape_class: ShapeClass, params: SuperquadricParams, psi, frac, top: bool):
    """Local points on a cylinder cap at fraction ``frac`` of the rim radius."""
    psi, frac = np.broadcast_arrays(np.asarray(psi, float), np.asarray(frac, float))
    psi = psi.ravel()
    frac = frac.ravel()
    a, b, c = params.size
    R, _ = cross_section(shape_class.xy_class, psi, a, b, params.eps2)
    z = c if top else -c
    pts = np.column_stack([frac * R * np.cos(psi), frac * R * np.sin(psi), np.full(len(psi), z)])
    nrm = np.zeros_like(pts)
    nrm[:, 2] = 1.0 if top else -1.0
    return pts, nrm


def canonical_inside(shape_class: ShapeClass, params: SuperquadricParams, local, strict=False):
    """Radial inside test in the primitive's own parameterization (local points)."""
    local = np.asarray(local, dtype=float)
    a, b, c = params.size
    u = local[:, 2] / c
    psi = np.arctan2(local[:, 1], local[:, 0])
    rho = np.hypot(local[:, 0], local[:, 1])
    R, _ = cross_section(shape_class.xy_class, psi, a, b, params.eps2)
    g, _ = z_profile(shape_class.z_class, np.clip(u, -1, 1), params.eps1)
    if strict:
        return (np.abs(u) < 1.0) & (rho < R * g)
    return (np.abs(u) <= 1.0) & (rho <= R * g)


def record_inside(rec: PrimitiveRecord, points, strict=False) -> np.ndarray:
    return canonical_inside(rec.shape_class, rec.params, to_local(points, rec.params), strict)


def canonical_samples(shape_class: ShapeClass, params: SuperquadricParams, n_psi=64, n_u=64, n_cap=8):
    """Deterministic local samples over the side surface (plus caps for cylinders).

    Returns points, normals and a spacing bound (half the largest gap between
    neighbouring side samples).
    """
    psi = -np.pi + 2 * np.pi * np.arange(n_psi) / n_psi
    u = np.linspace(-1.0, 1.0, n_u)
    P, U = np.meshgrid(psi, u)
    pts, nrm = canonical_surface(shape_class, params, P, U)
    grid = pts.reshape(n_u, n_psi, 3)
    gap = max(np.linalg.norm(np.diff(grid, axis=0), axis=2).max(),
              np.linalg.norm(grid - np.roll(grid, 1, axis=1), axis=2).max())
    if shape_class.z_class == ZClass.CYLINDER:
        frac = np.arange(n_cap) / n_cap
        FP, FF = np.meshgrid(psi, frac)
        top = cap_points(shape_class, params, FP, FF, True)
        bot = cap_points(shape_class, params, FP, FF, False)
        pts = np.concatenate([pts, top[0], bot[0]])
        nrm = np.concatenate([nrm, top[1], bot[1]])
        rim = np.abs(cross_section(shape_class.xy_class, psi, *params.size[:2], params.eps2)[0]).max()
        gap = max(gap, rim / n_cap)
    return pts, nrm, 0.5 * gap


def primitive_signed_distance(shape_class: ShapeClass, params: SuperquadricParams, points,
                              truncation: float, n_psi=64, n_u=64) -> np.ndarray:
    """Truncated signed distance of world points to a canonical primitive.

    Magnitude: distance to the tangent plane of the nearest surface sample,
    kept within ``[d_nn - h, d_nn]`` where ``d_nn`` is the nearest-sample
    distance and ``h`` the sampling gap bound. Sign: the radial inside test.
    """
    local = to_local(points, params)
    spts, snrm, h = canonical_samples(shape_class, params, n_psi, n_u)
    tree = cKDTree(spts)
    d_nn, idx = tree.query(local, distance_upper_bound=truncation + 2 * h)
    far = ~np.isfinite(d_nn)
    idx = np.where(far, 0, idx)
    plane = np.abs(np.einsum("ij,ij->i", local - spts[idx], snrm[idx]))
    mag = np.clip(plane, d_nn - h, d_nn)
    mag = np.where(far, truncation, np.minimum(mag, truncation))
    inside = canonical_inside(shape_class, params, local)
    return np.where(inside, -mag, mag)


# ---------------------------------------------------------------------------
# Replacement and refit
# ---------------------------------------------------------------------------

# Single-family sets used for ablation-style comparisons.
PRIMITIVE_SETS = {
    "full": None,
    "superquadric-only": None,
    "pfm1": ShapeClass(ZClass.CYLINDER, XYClass.RECT),
    "pfm2": ShapeClass(ZClass.CYLINDER, XYClass.ELLIPSE),
    "pfm3": ShapeClass(ZClass.CONE, XYClass.ELLIPSE),
    "pfm4": ShapeClass(ZClass.STAR, XYClass.STAR),
}


@dataclass
class RefitOptions:
    primitive_set: str = "full"
    refit: bool = True
    max_iters: int = 30
    tol: float = 1e-5
    fallback_ratio: float = 1.2
    support_margin: float = 3.0  # in voxels
    n_psi: int = 64
    n_u: int = 64

    def __post_init__(self):
        if self.primitive_set not in PRIMITIVE_SETS:
            raise ValueError(f"unknown primitive set {self.primitive_set!r}; "
                             f"choose from {sorted(PRIMITIVE_SETS)}")


@dataclass
class Replacement:
    record: PrimitiveRecord
    objective: float  # objective credited to the returned record
    sq_objective: float
    refit_objective: float | None = None
    refitted: bool = False
    iterations: int = 0
    history: list = field(default_factory=list, repr=False)


class PrimitiveObjective:
    """Weighted squared TSDF error of a primitive or superquadric over a shell
    of voxels within ``margin_voxels`` of a reference superquadric's surface.

    Deeper interior voxels are left out: both candidates saturate at the
    truncation there, so they only dilute the mean.
    """

    def __init__(self, grid: VoxelGrid, reference: SuperquadricParams, margin_voxels=3.0, sigma=None):
        pts = grid.centers()
        near = np.abs(radial_signed_distance(pts, reference, np.inf)) <= margin_voxels * grid.voxel_size
        self.grid = grid
        self.points = pts[near]
        self.target = grid.flat_values()[near]
        sigma = grid.truncation if sigma is None else sigma
        self.sqrt_w = np.exp(-0.5 * (self.target / sigma) ** 2)
        self.truncation = grid.truncation
        self.min_size = 2.0 * grid.voxel_size

    def _mean(self, r) -> float:
        return float(r @ r) / max(len(r), 1)

    def superquadric_residuals(self, params: SuperquadricParams) -> np.ndarray:
        return self.sqrt_w * (radial_signed_distance(self.points, params, self.truncation) - self.target)

    def superquadric_objective(self, params: SuperquadricParams) -> float:
        return self._mean(self.superquadric_residuals(params))

    def primitive_residuals(self, shape_class, params, n_psi=64, n_u=64) -> np.ndarray:
        d = primitive_signed_distance(shape_class, params, self.points, self.truncation, n_psi, n_u)
        return self.sqrt_w * (d - self.target)

    def primitive_objective(self, shape_class, params, n_psi=64, n_u=64) -> float:
        return self._mean(self.primitive_residuals(shape_class, params, n_psi, n_u))


def _target_class(sq: SuperquadricParams, primitive_set: str) -> ShapeClass:
    forced = PRIMITIVE_SETS[primitive_set]
    return forced if forced is not None else classify(sq.eps1, sq.eps2)


def replace_and_refit(sq: SuperquadricParams, grid: VoxelGrid, options: RefitOptions | None = None) -> Replacement:
    """Classify ``sq``, swap in the matching canonical primitive and refit it.

    The refit keeps the exponents inside the class intervals. If the refit
    objective exceeds ``fallback_ratio`` times the superquadric's own
    objective, the superquadric geometry is kept and only the class attached.
    """
    options = options or RefitOptions()
    shape_class = _target_class(sq, options.primitive_set)
    start = sq.replace(**dict(zip(("eps1", "eps2"), project_eps(sq.eps1, sq.eps2, shape_class))))
    obj = PrimitiveObjective(grid, sq, options.support_margin)
    sq_obj = obj.superquadric_objective(sq)
    fallback = Replacement(PrimitiveRecord(shape_class, start), sq_obj, sq_obj)
    if options.primitive_set == "superquadric-only" or not options.refit or len(obj.points) == 0:
        return fallback
    if not np.any(obj.target < 0):
        return fallback

    lo1, hi1 = class_bounds(int(shape_class.z_class))
    lo2, hi2 = class_bounds(int(shape_class.xy_class))
    span = obj.grid.voxel_size * (np.asarray(grid.dims) + 2)
    max_size = float(span.max())

    def project(x):
        x = np.array(x, dtype=float)
        x[0] = np.clip(x[0], lo1, hi1)
        x[1] = np.clip(x[1], lo2, hi2)
        x[2:5] = np.clip(x[2:5], obj.min_size, max_size)
        return x

    def residuals(x):
        return obj.primitive_residuals(shape_class, SuperquadricParams.from_vector(x), options.n_psi, options.n_u)

    res = levenberg_marquardt(residuals, start.to_vector(), project=project,
                              max_iters=options.max_iters, tol=options.tol)
    params = SuperquadricParams.from_vector(res.x)
    # projection keeps eps inside the class; re-clip guards the wrap of 0.5/2 by rounding
    params = params.replace(**dict(zip(("eps1", "eps2"), project_eps(params.eps1, params.eps2, shape_class))))
    refit_obj = obj.primitive_objective(shape_class, params, options.n_psi, options.n_u)
    if refit_obj > options.fallback_ratio * sq_obj:
        fallback.refit_objective = refit_obj
        fallback.iterations = res.iterations
        fallback.history = res.history
        return fallback
    return Replacement(PrimitiveRecord(shape_class, params), refit_obj, sq_obj, refit_obj, True,
                       res.iterations, res.history)


def build_model(superquadrics, grid: VoxelGrid, options: RefitOptions | None = None,
                normalization: Normalization | None = None) -> tuple:
    """Replace every superquadric; returns ``(PrimitiveModel, [Replacement, ...])``."""
    reps = [replace_and_refit(sq, grid, options) for sq in superquadrics]
    return PrimitiveModel([r.record for r in reps], normalization), reps
