"""Superquadric decomposition of TSDF grids and parameterized primitive models."""

from .codec import decode_model, encode_model, read_model, write_model
from .config import PipelineConfig
from .decomposition import DecomposeConfig, build_threshold_sequence, decompose, extract_candidates, fit_region
from .errors import *  # noqa: F401,F403
from .estimators import PrimitiveAbstractor, PrimitiveMatcher, SuperquadricDecomposer
from .geometry import SuperquadricParams, eval_implicit, parametric_surface, radial_signed_distance
from .mesh import TriangleMesh, read_obj, sample_mesh, write_obj
from .metrics import MetricsReport, chamfer_distance, f1_score, normal_consistency, viou
from .primitives import (PrimitiveModel, PrimitiveRecord, ShapeClass, XYClass, ZClass, classify,
                         replace_and_refit)
from .tessellation import tessellate_model, tessellate_record, tessellate_superquadric
from .tsdf import GridSpec, VoxelGrid, fuse_depth_views, read_grid, voxelize_mesh, write_grid

__version__ = "0.1.0"
