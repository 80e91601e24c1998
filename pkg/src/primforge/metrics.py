"""Reconstruction metrics: Chamfer distance, F1, normal consistency and volumetric IoU."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import EmptySet, NonUnitNormal
from .mesh import TriangleMesh
from .primitives import PrimitiveModel, record_inside
from .tsdf import GridSpec, VoxelGrid, voxelize_mesh

DEFAULT_TAU = 0.02
DEFAULT_SAMPLES = 10000
DEFAULT_VIOU_RESOLUTION = 100
METRIC_NAMES = ("cd", "viou", "f1", "nc")


def _points(p, name) -> np.ndarray:
    p = np.asarray(p, dtype=float).reshape(-1, 3)
    if len(p) == 0:
        raise EmptySet(f"EmptySet: {name} has no points")
    return p


def _nn_distance(src: np.ndarray, dst: np.ndarray):
    return cKDTree(dst).query(src, k=1)


def chamfer_distance(P, Q) -> float:
    """Squared, bidirectional, mean-per-side Chamfer distance."""
    P, Q = _points(P, "P"), _points(Q, "Q")
    d_pq, _ = _nn_distance(P, Q)
    d_qp, _ = _nn_distance(Q, P)
    return float(np.mean(d_pq ** 2) + np.mean(d_qp ** 2))


def precision_recall(P, Q, tau: float = DEFAULT_TAU):
    if not tau > 0:
        raise ValueError("tau must be positive")
    P, Q = _points(P, "P"), _points(Q, "Q")
    d_pq, _ = _nn_distance(P, Q)
    d_qp, _ = _nn_distance(Q, P)
    return float(np.mean(d_pq <= tau)), float(np.mean(d_qp <= tau))


def f1_score(P, Q, tau: float = DEFAULT_TAU) -> float:
    """Harmonic mean of precision (P near Q) and recall (Q near P) at distance ``tau``."""
    prec, rec = precision_recall(P, Q, tau)
    if prec + rec == 0:
        return 0.0
    return 2.0 * prec * rec / (prec + rec)


def _unit_normals(n, count, name) -> np.ndarray:
    n = np.asarray(n, dtype=float).reshape(-1, 3)
    if len(n) != count:
        raise ValueError(f"{name}: normal count does not match point count")
    if np.any(np.abs(np.linalg.norm(n, axis=1) - 1.0) > 1e-6):
        raise NonUnitNormal(f"NonUnitNormal: {name} has normals that are not unit length")
    return n


def normal_consistency(P, P_normals, Q, Q_normals) -> float:
    """Mean absolute cosine between each normal and its nearest neighbour's, symmetrized."""
    P, Q = _points(P, "P"), _points(Q, "Q")
    nP = _unit_normals(P_normals, len(P), "P")
    nQ = _unit_normals(Q_normals, len(Q), "Q")
    _, i_pq = _nn_distance(P, Q)
    _, i_qp = _nn_distance(Q, P)
    fwd = np.abs(np.einsum("ij,ij->i", nP, nQ[i_pq])).mean()
    bwd = np.abs(np.einsum("ij,ij->i", nQ, nP[i_qp])).mean()
    return float(0.5 * (fwd + bwd))


def occupancy(obj, resolution: int = DEFAULT_VIOU_RESOLUTION) -> np.ndarray:
    """Boolean occupancy on ``resolution^3`` voxels over [-1, 1]^3.

    Accepts a VoxelGrid (occupied where value < 0), a TriangleMesh (voxelized
    first), a PrimitiveModel (union of the primitives' inside tests at voxel
    centers) or a boolean array.
    """
    spec = GridSpec.cube(resolution)
    if isinstance(obj, VoxelGrid):
        return obj.occupancy()
    if isinstance(obj, TriangleMesh):
        return voxelize_mesh(obj, spec).occupancy()
    if isinstance(obj, PrimitiveModel):
        return model_occupancy(obj, spec)
    return np.asarray(obj, dtype=bool)


def model_occupancy(model: PrimitiveModel, spec: GridSpec) -> np.ndarray:
    pts = spec.centers()
    occ = np.zeros(len(pts), dtype=bool)
    for rec in model.primitives:
        occ |= record_inside(rec, pts)
    return occ.reshape(spec.dims, order="F")


def viou(A, B, resolution: int = DEFAULT_VIOU_RESOLUTION) -> float:
    """|A and B| / |A or B| of the two occupancies; 1.0 when both are empty."""
    a, b = occupancy(A, resolution), occupancy(B, resolution)
    if a.shape != b.shape:
        raise ValueError(f"occupancy shapes differ: {a.shape} vs {b.shape}")
    union = np.count_nonzero(a | b)
    if union == 0:
        return 1.0
    return float(np.count_nonzero(a & b) / union)


@dataclass
class MetricsReport:
    cd: float | None = None
    viou: float | None = None
    f1: float | None = None
    nc: float | None = None
    sample_count: int = DEFAULT_SAMPLES
    f1_threshold: float = DEFAULT_TAU
    grid_resolution: int = DEFAULT_VIOU_RESOLUTION
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {}
        if self.cd is not None:
            out["cd"] = self.cd
            out["cd_scaled_e3"] = self.cd * 1e3
        for name in ("viou", "f1", "nc"):
            value = getattr(self, name)
            if value is not None:
                out[name] = value
        params = {"sample_count": self.sample_count, "f1_threshold": self.f1_threshold,
                  "grid_resolution": self.grid_resolution}
        params.update(self.extra)
        out["params"] = params
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=False)


def parse_metric_list(text: str) -> tuple:
    names = tuple(s.strip() for s in text.split(",") if s.strip())
    unknown = [n for n in names if n not in METRIC_NAMES]
    if unknown or not names:
        raise ValueError(f"unknown metrics: {', '.join(unknown) or '(none)'}")
    return names


def evaluate(pred_points, pred_normals, gt_points, gt_normals, pred_occ=None, gt_occ=None,
             metrics=METRIC_NAMES, tau: float = DEFAULT_TAU,
             resolution: int = DEFAULT_VIOU_RESOLUTION) -> MetricsReport:
    """Compute the selected metrics from pre-sampled surfaces and occupancies."""
    report = MetricsReport(sample_count=len(np.asarray(pred_points).reshape(-1, 3)),
                           f1_threshold=tau, grid_resolution=resolution)
    if "cd" in metrics:
        report.cd = chamfer_distance(pred_points, gt_points)
    if "f1" in metrics:
        report.f1 = f1_score(pred_points, gt_points, tau)
    if "nc" in metrics:
        report.nc = normal_consistency(pred_points, pred_normals, gt_points, gt_normals)
    if "viou" in metrics:
        report.viou = viou(pred_occ, gt_occ, resolution)
    return report


