"""Analytic test scenes: superquadric TSDF grids and ray-cast sphere depth views."""

from __future__ import annotations

import numpy as np

from .geometry import SuperquadricParams, radial_signed_distance
from .tsdf import DepthView, GridSpec, VoxelGrid


def superquadric_tsdf(params, spec: GridSpec) -> VoxelGrid:
    """Union (pointwise minimum) of the radial TSDFs of one or more superquadrics."""
    if isinstance(params, SuperquadricParams):
        params = [params]
    pts = spec.centers()
    values = np.full(len(pts), spec.truncation)
    for p in params:
        values = np.minimum(values, radial_signed_distance(pts, p, spec.truncation))
    return VoxelGrid.from_spec(spec, values.reshape(spec.dims, order="F"))


def sphere_tsdf(center, radius, spec: GridSpec) -> VoxelGrid:
    d = np.linalg.norm(spec.centers() - np.asarray(center, float), axis=1) - radius
    d = np.clip(d, -spec.truncation, spec.truncation)
    return VoxelGrid.from_spec(spec, d.reshape(spec.dims, order="F"))


def random_superquadric(rng, eps_range=(0.3, 3.0), size_range=(0.2, 0.45),
                        max_offset=0.1, center=(0.0, 0.0, 0.0)) -> SuperquadricParams:
    eps = rng.uniform(*eps_range, size=2)
    size = rng.uniform(*size_range, size=3)
    rot = rng.uniform(-np.pi, np.pi, size=3)
    trans = np.asarray(center, float) + rng.uniform(-max_offset, max_offset, size=3)
    return SuperquadricParams(eps[0], eps[1], tuple(size), tuple(rot), tuple(trans))


def look_at(eye, target=(0.0, 0.0, 0.0), up=(0.0, 0.0, 1.0)) -> np.ndarray:
    """Camera-to-world matrix for a camera with x right, y down, z forward."""
    eye = np.asarray(eye, float)
    fwd = np.asarray(target, float) - eye
    fwd /= np.linalg.norm(fwd)
    right = np.cross(fwd, up)
    right /= np.linalg.norm(right)
    down = np.cross(fwd, right)
    m = np.eye(4)
    m[:3, :3] = np.column_stack([right, down, fwd])
    m[:3, 3] = eye
    return m


def ring_poses(n_azimuth=8, elevations_deg=(-75, -45, -15, 15, 45, 75), distance=2.5,
               target=(0.0, 0.0, 0.0)) -> list:
    """Cameras on a sphere around ``target``: every elevation at every azimuth."""
    poses = []
    for az in np.arange(n_azimuth) * 2 * np.pi / n_azimuth:
        for el in np.radians(elevations_deg):
            eye = np.asarray(target, float) + distance * np.array(
                [np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)])
            poses.append(look_at(eye, target))
    return poses


def render_sphere_depth(center, radius, camera_to_world, width=128, height=128,
                        intrinsics=(200.0, 200.0, 63.5, 63.5)) -> DepthView:
    """Depth (along the optical axis) of a sphere; 0 where the ray misses."""
    fx, fy, cx, cy = intrinsics
    v, u = np.mgrid[0:height, 0:width].astype(float)
    dirs_cam = np.stack([(u - cx) / fx, (v - cy) / fy, np.ones_like(u)], axis=-1).reshape(-1, 3)
    rot = camera_to_world[:3, :3]
    o = camera_to_world[:3, 3] - np.asarray(center, float)
    d = dirs_cam @ rot.T
    a = np.einsum("ij,ij->i", d, d)
    b = 2.0 * d @ o
    c = o @ o - radius ** 2
    disc = b * b - 4 * a * c
    depth = np.zeros(len(d))
    hit = disc >= 0
    s = (-b[hit] - np.sqrt(disc[hit])) / (2 * a[hit])
    depth[hit] = np.where(s > 0, s, 0.0)
    return DepthView(width, height, intrinsics, camera_to_world, depth.reshape(height, width))


def sphere_views(center=(0.0, 0.0, 0.0), radius=0.5, width=128, height=128,
                 intrinsics=(200.0, 200.0, 63.5, 63.5), **pose_kwargs) -> list:
    """Depth views of a sphere from ``ring_poses`` (48 by default: 8 azimuths x 6 elevations)."""
    return [render_sphere_depth(center, radius, pose, width, height, intrinsics)
            for pose in ring_poses(target=center, **pose_kwargs)]


def _clamped(d, spec: GridSpec) -> VoxelGrid:
    d = np.clip(d, -spec.truncation, spec.truncation)
    return VoxelGrid.from_spec(spec, d.reshape(spec.dims, order="F"))


def cylinder_tsdf(radius, half_height, spec: GridSpec, center=(0.0, 0.0, 0.0)) -> VoxelGrid:
    """Exact TSDF of a z-aligned solid cylinder."""
    p = spec.centers() - np.asarray(center, float)
    q = np.column_stack([np.hypot(p[:, 0], p[:, 1]) - radius, np.abs(p[:, 2]) - half_height])
    d = np.minimum(q.max(axis=1), 0.0) + np.linalg.norm(np.maximum(q, 0.0), axis=1)
    return _clamped(d, spec)


def box_tsdf(half_extents, spec: GridSpec, center=(0.0, 0.0, 0.0)) -> VoxelGrid:
    """Exact TSDF of an axis-aligned solid box."""
    q = np.abs(spec.centers() - np.asarray(center, float)) - np.asarray(half_extents, float)
    d = np.minimum(q.max(axis=1), 0.0) + np.linalg.norm(np.maximum(q, 0.0), axis=1)
    return _clamped(d, spec)
