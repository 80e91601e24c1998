"""Estimator-style front ends for decomposition and primitive matching."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_fraction, check_grid, check_points, check_positive
from .decomposition import DecomposeConfig, run_decomposition
from .geometry import SuperquadricParams, inside, radial_signed_distance
from .mesh import TriangleMesh
from .primitives import PRIMITIVE_SETS, RefitOptions, build_model, primitive_signed_distance, record_inside
from .tsdf import GridSpec, VoxelGrid, normalize_mesh, voxelize_mesh


def _query_points(X) -> np.ndarray:
    # a grid stands for its voxel centers, so fit_transform(grid) works
    return X.centers() if isinstance(X, VoxelGrid) else check_points(X)


def _first_hit(masks: list, n: int) -> np.ndarray:
    labels = np.full(n, -1, dtype=int)
    for k, m in enumerate(masks):
        labels[(labels < 0) & m] = k
    return labels


class SuperquadricDecomposer(BaseEstimator, TransformerMixin):
    """Decompose a TSDF grid into superquadrics.

    After ``fit``, ``predict`` labels points with the first superquadric that
    contains them (-1 for none) and ``transform`` returns the untruncated radial
    signed distance of each point to each superquadric. Both also take a grid,
    standing for its voxel centers.
    """

    def __init__(self, alpha=0.6, min_voxels=5, max_primitives=100, accept_residual=1e-2,
                 accept_coverage=0.3, max_iters=100, axis_restarts=True, n_threads=None):
        self.alpha = alpha
        self.min_voxels = min_voxels
        self.max_primitives = max_primitives
        self.accept_residual = accept_residual
        self.accept_coverage = accept_coverage
        self.max_iters = max_iters
        self.axis_restarts = axis_restarts
        self.n_threads = n_threads

    def _config(self) -> DecomposeConfig:
        check_fraction(self.alpha, "alpha")
        check_positive(self.min_voxels, "min_voxels", integer=True)
        check_positive(self.max_primitives, "max_primitives", integer=True)
        check_positive(self.accept_residual, "accept_residual")
        check_fraction(self.accept_coverage, "accept_coverage", open_low=False, open_high=False)
        check_positive(self.max_iters, "max_iters", integer=True)
        return DecomposeConfig(alpha=self.alpha, min_voxels=self.min_voxels,
                               max_primitives=self.max_primitives, accept_residual=self.accept_residual,
                               accept_coverage=self.accept_coverage, max_iters=self.max_iters,
                               axis_restarts=self.axis_restarts, n_threads=self.n_threads)

    def fit(self, X, y=None):
        grid = check_grid(X)
        result = run_decomposition(grid, self._config())
        self.superquadrics_ = list(result.primitives)
        self.fit_results_ = list(result.fits)
        self.thresholds_ = tuple(result.thresholds.values)
        self.n_rejected_ = result.rejected
        self.grid_ = grid
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "superquadrics_")
        pts = _query_points(X)
        return _first_hit([inside(pts, sq) for sq in self.superquadrics_], len(pts))

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "superquadrics_")
        pts = _query_points(X)
        cols = [radial_signed_distance(pts, sq, np.inf) for sq in self.superquadrics_]
        return np.column_stack(cols) if cols else np.empty((len(pts), 0))


class PrimitiveMatcher(BaseEstimator, TransformerMixin):
    """Replace fitted superquadrics with canonical primitives and refit them.

    ``fit(superquadrics, grid)`` takes the superquadric list as ``X`` and the
    TSDF grid the superquadrics were fitted to.
    """

    def __init__(self, primitive_set="full", refit=True, max_iters=30, fallback_ratio=1.2):
        self.primitive_set = primitive_set
        self.refit = refit
        self.max_iters = max_iters
        self.fallback_ratio = fallback_ratio

    def _options(self) -> RefitOptions:
        if self.primitive_set not in PRIMITIVE_SETS:
            raise ValueError(f"unknown primitive set {self.primitive_set!r}")
        check_positive(self.max_iters, "max_iters", integer=True)
        check_positive(self.fallback_ratio, "fallback_ratio")
        return RefitOptions(primitive_set=self.primitive_set, refit=self.refit,
                            max_iters=self.max_iters, fallback_ratio=self.fallback_ratio)

    def fit(self, X, grid=None, normalization=None):
        if grid is None:
            raise ValueError("PrimitiveMatcher.fit needs the TSDF grid")
        sqs = [X] if isinstance(X, SuperquadricParams) else list(X)
        if not all(isinstance(s, SuperquadricParams) for s in sqs):
            raise TypeError("X must be a sequence of SuperquadricParams")
        self.model_, self.replacements_ = build_model(sqs, check_grid(grid), self._options(), normalization)
        return self

    @property
    def records_(self):
        return self.model_.primitives

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        pts = _query_points(X)
        return _first_hit([record_inside(r, pts) for r in self.model_.primitives], len(pts))

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        pts = _query_points(X)
        cols = [primitive_signed_distance(r.shape_class, r.params, pts, np.inf)
                for r in self.model_.primitives]
        return np.column_stack(cols) if cols else np.empty((len(pts), 0))


class PrimitiveAbstractor(PrimitiveMatcher):
    """Full pipeline: mesh or grid in, parameterized primitive model out.

    Mesh inputs are normalized into [-0.9, 0.9]^3 and voxelized first; the
    normalization is stored on the model.
    """

    def __init__(self, resolution=100, truncation_factor=1.2, alpha=0.6, min_voxels=5,
                 max_primitives=100, accept_residual=1e-2, accept_coverage=0.3,
                 primitive_set="full", refit=True, max_iters=30, fallback_ratio=1.2, n_threads=None):
        super().__init__(primitive_set, refit, max_iters, fallback_ratio)
        self.resolution = resolution
        self.truncation_factor = truncation_factor
        self.alpha = alpha
        self.min_voxels = min_voxels
        self.max_primitives = max_primitives
        self.accept_residual = accept_residual
        self.accept_coverage = accept_coverage
        self.n_threads = n_threads

    def _grid(self, X):
        if isinstance(X, TriangleMesh):
            check_positive(self.resolution, "resolution", integer=True)
            check_positive(self.truncation_factor, "truncation_factor")
            mesh, norm = normalize_mesh(X)
            spec = GridSpec.cube(self.resolution, truncation_factor=self.truncation_factor)
            return voxelize_mesh(mesh, spec), norm
        return check_grid(X, self.truncation_factor), None

    def fit(self, X, y=None):
        grid, norm = self._grid(X)
        options = self._options()
        self.decomposer_ = SuperquadricDecomposer(
            alpha=self.alpha, min_voxels=self.min_voxels, max_primitives=self.max_primitives,
            accept_residual=self.accept_residual, accept_coverage=self.accept_coverage,
            n_threads=self.n_threads).fit(grid)
        self.grid_ = grid
        self.normalization_ = norm
        self.model_, self.replacements_ = build_model(self.decomposer_.superquadrics_, grid, options, norm)
        return self
