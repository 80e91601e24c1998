"""Superquadric decomposition of a TSDF grid.

A decreasing sequence of negative distance thresholds is swept over the grid.
At each threshold the sub-threshold voxels are split into 26-connected
regions, and every large-enough region is fitted with a superquadric by
minimizing the weighted squared difference between the superquadric's
truncated radial distance and the grid values.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import NoInterior
from .geometry import (EPS_MAX, EPS_MIN, SuperquadricParams, eval_implicit, matrix_to_euler,
                       radial_signed_distance, to_local, wrap_angle)
from .optim import central_jacobian, levenberg_marquardt
from .tsdf import VoxelGrid

_CUBE26 = np.ones((3, 3, 3), dtype=bool)


def thread_count() -> int:
    """Worker cap from ``PRIMFORGE_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("PRIMFORGE_THREADS", "1")))
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# Thresholds and candidate regions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ThresholdSequence:
    values: tuple
    alpha: float
    floor: float

    def __iter__(self):
        return iter(self.values)

    def __len__(self):
        return len(self.values)


def build_threshold_sequence(grid: VoxelGrid, alpha: float = 0.6, floor: float | None = None) -> ThresholdSequence:
    """Geometric thresholds ``t1 = min(values)``, ``t_{m+1} = alpha * t_m``.

    Elements are kept while ``|t| >= floor``; the first element is always kept.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    floor = grid.voxel_size if floor is None else float(floor)
    t = float(np.min(grid.values))
    if not t < 0.0:
        raise NoInterior("grid has no negative voxel")
    values = [t]
    while True:
        nxt = alpha * values[-1]
        if abs(nxt) < floor:
            break
        values.append(nxt)
    return ThresholdSequence(tuple(values), float(alpha), floor)


@dataclass
class CandidateRegion:
    voxel_indices: np.ndarray
    seed_threshold: float

    @property
    def size(self) -> int:
        return int(len(self.voxel_indices))


def extract_candidates(grid: VoxelGrid, threshold: float, active_mask=None, min_size: int = 5) -> list:
    """26-connected components of active voxels with value ``<= threshold``.

    Components smaller than ``min_size`` are dropped. Regions are ordered by
    size (descending), then by their smallest linear index.
    """
    if min_size < 1:
        raise ValueError("min_size must be >= 1")
    mask = grid.values <= threshold
    if active_mask is not None:
        mask &= np.asarray(active_mask, dtype=bool).reshape(grid.dims)
    labels, n = ndimage.label(mask, structure=_CUBE26)
    if n == 0:
        return []
    flat = labels.ravel(order="F")
    idx = np.flatnonzero(flat)
    lab = flat[idx]
    order = np.argsort(lab, kind="stable")
    idx, lab = idx[order], lab[order]
    bounds = np.flatnonzero(np.diff(lab)) + 1
    groups = np.split(idx, bounds)
    regions = [CandidateRegion(g, float(threshold)) for g in groups if len(g) >= min_size]
    regions.sort(key=lambda r: (-r.size, int(r.voxel_indices[0])))
    return regions


# ---------------------------------------------------------------------------
# Fitting
# ---------------------------------------------------------------------------

def _region_points(grid: VoxelGrid, indices) -> np.ndarray:
    ijk = grid.spec.unravel(indices)
    return np.asarray(grid.origin) + grid.voxel_size * ijk


def init_superquadric(region: CandidateRegion, grid: VoxelGrid, axis_order=(0, 1, 2)) -> SuperquadricParams:
    """Ellipsoid initialization from the region's centroid and principal axes.

    Principal axes are ordered by decreasing variance (so ``a`` is the longest
    semi-axis); ``axis_order`` permutes which principal axis becomes local x, y, z.
    """
    if region.size == 0:
        raise ValueError("empty region")
    pts = _region_points(grid, region.voxel_indices)
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    cov = centered.T @ centered / len(pts)
    evals, evecs = np.linalg.eigh(cov)
    axes = evecs[:, np.argsort(evals)[::-1]][:, list(axis_order)]
    if np.linalg.det(axes) < 0:
        axes[:, 2] = -axes[:, 2]
    extents = np.abs(centered @ axes).max(axis=0)
    size = np.maximum(1.1 * extents, 2.0 * grid.voxel_size)
    return SuperquadricParams(1.0, 1.0, tuple(size), tuple(matrix_to_euler(axes)), tuple(centroid))


@dataclass
class FitOptions:
    max_iters: int = 100
    tol: float = 1e-6
    weight_sigma: float | None = None  # defaults to the grid truncation
    dilation: int = 2


@dataclass
class FitResult:
    params: SuperquadricParams
    residual: float
    coverage: float
    iterations: int
    converged: bool
    history: list = field(default_factory=list, repr=False)


class TSDFObjective:
    """Weighted squared TSDF error of a superquadric over a fixed voxel support.

    Weights are ``exp(-(t / sigma)^2)`` on the support and zero elsewhere.
    """

    def __init__(self, grid: VoxelGrid, support_indices, sigma: float | None = None):
        self.grid = grid
        self.indices = np.asarray(support_indices, dtype=np.int64)
        self.points = _region_points(grid, self.indices)
        self.target = grid.flat_values()[self.indices]
        sigma = grid.truncation if sigma is None else sigma
        self.weights = np.exp(-(self.target / sigma) ** 2)
        self.sqrt_w = np.sqrt(self.weights)
        self.truncation = grid.truncation
        self.min_size = 2.0 * grid.voxel_size
        lo = np.asarray(grid.origin) - grid.voxel_size
        hi = lo + grid.voxel_size * (np.asarray(grid.dims) + 1)
        self._tbounds = (lo, hi)
        self._max_size = float(np.max(hi - lo))

    @classmethod
    def for_region(cls, grid: VoxelGrid, region: CandidateRegion, dilation: int = 2, sigma=None):
        """Support = the region dilated by ``dilation`` voxels (26-neighbourhood)."""
        ijk = grid.spec.unravel(region.voxel_indices)
        lo = np.maximum(ijk.min(axis=0) - dilation, 0)
        hi = np.minimum(ijk.max(axis=0) + dilation + 1, grid.dims)
        sub = np.zeros(tuple(hi - lo), dtype=bool)
        local = ijk - lo
        sub[local[:, 0], local[:, 1], local[:, 2]] = True
        if dilation > 0:
            sub = ndimage.binary_dilation(sub, structure=_CUBE26, iterations=dilation)
        sub_ijk = np.argwhere(sub) + lo
        return cls(grid, np.sort(grid.spec.linear_index(sub_ijk)), sigma)

    def project(self, x) -> np.ndarray:
        x = np.array(x, dtype=float)
        x[0:2] = np.clip(x[0:2], EPS_MIN, EPS_MAX)
        x[2:5] = np.clip(x[2:5], self.min_size, self._max_size)
        x[5:8] = wrap_angle(x[5:8])
        x[8:11] = np.clip(x[8:11], *self._tbounds)
        return x

    def predicted(self, params) -> np.ndarray:
        if not isinstance(params, SuperquadricParams):
            params = SuperquadricParams.from_vector(params)
        return radial_signed_distance(self.points, params, self.truncation)

    def residuals(self, x) -> np.ndarray:
        return self.sqrt_w * (self.predicted(x) - self.target)

    def objective(self, params) -> float:
        x = params.to_vector() if isinstance(params, SuperquadricParams) else params
        r = self.residuals(x)
        return float(r @ r) / max(len(r), 1)

    def jacobian(self, x, rel_step=1e-6) -> np.ndarray:
        return central_jacobian(self.residuals, np.asarray(x, float), rel_step)

    def coverage(self, params) -> float:
        err = np.abs(self.predicted(params) - self.target)
        return float(np.mean(err < self.grid.voxel_size)) if len(err) else 0.0


def fit_superquadric(grid: VoxelGrid, region: CandidateRegion, init: SuperquadricParams,
                     options: FitOptions | None = None) -> FitResult:
    """Levenberg-Marquardt fit of all 11 parameters to the region's TSDF values."""
    options = options or FitOptions()
    obj = TSDFObjective.for_region(grid, region, options.dilation, options.weight_sigma)
    res = levenberg_marquardt(obj.residuals, init.to_vector(), project=obj.project,
                              max_iters=options.max_iters, tol=options.tol)
    params = SuperquadricParams.from_vector(res.x)
    return FitResult(params, res.cost, obj.coverage(params), res.iterations, res.converged, res.history)


def _axis_orders(restarts: bool):
    return [(0, 1, 2), (1, 2, 0), (2, 0, 1)] if restarts else [(0, 1, 2)]


def fit_region(grid: VoxelGrid, region: CandidateRegion, options: FitOptions | None = None,
               axis_restarts: bool = True) -> FitResult:
    """Fit from the principal-axis initialization, optionally retrying with each
    principal axis as the local z axis, and keep the lowest residual."""
    best = None
    for order in _axis_orders(axis_restarts):
        fit = fit_superquadric(grid, region, init_superquadric(region, grid, order), options)
        if best is None or fit.residual < best.residual:
            best = fit
    return best


# ---------------------------------------------------------------------------
# Driver
# ---------------------------------------------------------------------------

@dataclass
class DecomposeConfig:
    alpha: float = 0.6
    floor: float | None = None  # defaults to the voxel size
    min_voxels: int = 5
    max_primitives: int = 100
    accept_residual: float = 1e-2
    accept_coverage: float = 0.3
    max_iters: int = 100
    tol: float = 1e-6
    weight_sigma: float | None = None
    axis_restarts: bool = True
    n_threads: int | None = None


@dataclass
class Decomposition:
    primitives: list
    fits: list
    thresholds: ThresholdSequence
    active_counts: list
    rejected: int = 0


def run_decomposition(grid: VoxelGrid, config: DecomposeConfig | None = None) -> Decomposition:
    config = config or DecomposeConfig()
    seq = build_threshold_sequence(grid, config.alpha, config.floor)
    options = FitOptions(config.max_iters, config.tol, config.weight_sigma)
    active = np.ones(grid.dims, dtype=bool)
    centers = grid.centers()
    primitives, fits, counts = [], [], [int(active.sum())]
    rejected = 0
    workers = config.n_threads or thread_count()
    for threshold in seq:
        if len(primitives) >= config.max_primitives:
            break
        snapshot = active.copy()
        regions = extract_candidates(grid, threshold, snapshot, config.min_voxels)
        if not regions:
            continue

        def job(region):
            return fit_region(grid, region, options, config.axis_restarts)

        if workers > 1 and len(regions) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(job, regions))
        else:
            results = [job(r) for r in regions]

        active_flat = active.reshape(-1, order="F")
        for region, fit in zip(regions, results):
            if len(primitives) >= config.max_primitives:
                break
            # an earlier acceptance in this pass may have swallowed the region
            if int(active_flat[region.voxel_indices].sum()) < config.min_voxels:
                continue
            if fit.residual <= config.accept_residual and fit.coverage >= config.accept_coverage:
                primitives.append(fit.params)
                fits.append(fit)
                swallowed = eval_implicit(to_local(centers, fit.params), fit.params) <= 1.0
                active_flat[swallowed] = False
                active = active_flat.reshape(grid.dims, order="F")
            else:
                rejected += 1
        counts.append(int(active.sum()))
    return Decomposition(primitives, fits, seq, counts, rejected)


def decompose(grid: VoxelGrid, config: DecomposeConfig | None = None) -> list:
    """Accepted superquadrics in acceptance order."""
    return run_decomposition(grid, config).primitives
