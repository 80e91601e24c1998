"""Command line: fuse, fit, reconstruct, eval and classify.

Results go to stdout (JSON or a table); diagnostics go to stderr.
Exit codes: 0 success, 2 I/O or format error, 3 no interior, 4 degenerate evaluation.
"""

from __future__ import annotations

import argparse
import json
import sys
from collections import Counter

import numpy as np

from .codec import read_model, write_model
from .config import PipelineConfig
from .errors import (BadPose, DegenerateMesh, EmptySet, EmptyViews, FormatError, InvalidModel, NoInterior,
                     NonUnitNormal, PrimforgeError)
from .estimators import PrimitiveAbstractor
from .mesh import read_obj, sample_mesh, write_obj
from .metrics import (DEFAULT_SAMPLES, DEFAULT_TAU, MetricsReport, chamfer_distance, f1_score,
                      normal_consistency, parse_metric_list, viou)
from .primitives import PrimitiveModel
from .tessellation import tessellate_model
from .tsdf import GridSpec, fuse_depth_views, normalize_mesh, read_depth_views, read_grid, write_grid

EXIT_OK = 0
EXIT_IO = 2
EXIT_NO_INTERIOR = 3
EXIT_DEGENERATE = 4


class CommandError(Exception):
    def __init__(self, message, code=EXIT_IO):
        super().__init__(message)
        self.code = code


def _emit(obj):
    print(json.dumps(obj))


def _config(args, keys) -> PipelineConfig:
    overrides = {k: getattr(args, k, None) for k in keys}
    try:
        return PipelineConfig.resolve(overrides, args.config)
    except (OSError, ValueError, TypeError) as exc:
        raise CommandError(f"config: {exc}") from None


def _is_model_path(path) -> bool:
    name = str(path).lower()
    return name.endswith(".pqp") or name.endswith(".pqp.json")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_fuse(args) -> int:
    cfg = _config(args, ("resolution", "truncation_factor"))
    views = read_depth_views(args.depth_dir)
    spec = GridSpec.cube(cfg.resolution, truncation_factor=cfg.truncation_factor)
    grid = fuse_depth_views(views, spec)
    size = write_grid(grid, args.output)
    _emit({"views": len(views), "dims": list(grid.dims), "min": float(grid.values.min()),
           "negative_voxels": int(np.count_nonzero(grid.values < 0)), "bytes": size})
    return EXIT_OK


def _load_fit_input(path):
    if str(path).lower().endswith(".obj"):
        return read_obj(path)
    return read_grid(path)


def cmd_fit(args) -> int:
    cfg = _config(args, ("alpha", "min_voxels", "max_primitives", "primitive_set", "seed",
                         "resolution", "truncation_factor"))
    data = _load_fit_input(args.input)
    est = PrimitiveAbstractor(resolution=cfg.resolution, truncation_factor=cfg.truncation_factor,
                              alpha=cfg.alpha, min_voxels=cfg.min_voxels,
                              max_primitives=cfg.max_primitives, accept_residual=cfg.accept_residual,
                              accept_coverage=cfg.accept_coverage, primitive_set=cfg.primitive_set)
    est.fit(data)
    model = est.model_
    if not model.primitives:
        raise CommandError("NoInterior: no primitive was accepted", EXIT_NO_INTERIOR)
    size = write_model(model, args.output)
    hist = Counter(str(r.shape_class) for r in model.primitives)
    _emit({"primitives": len(model.primitives), "classes": dict(sorted(hist.items())),
           "mean_residual": float(np.mean([r.objective for r in est.replacements_])),
           "refitted": int(sum(r.refitted for r in est.replacements_)), "bytes": size})
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    cfg = _config(args, ("tess",))
    model = read_model(args.input)
    mesh = tessellate_model(model, cfg.tess, denormalize=True)
    size = write_obj(mesh, args.output)
    _emit({"vertices": len(mesh.vertices), "faces": len(mesh.faces), "bytes": size})
    return EXIT_OK


def _eval_surface(path, tess):
    """Mesh in the shared normalized frame, plus what to voxelize for VIoU."""
    if _is_model_path(path):
        model = read_model(path)
        return tessellate_model(model, tess), model
    mesh, _ = normalize_mesh(read_obj(path))
    return mesh, mesh


def evaluate_paths(pred, gt, metrics=("cd", "viou", "f1", "nc"), tau=DEFAULT_TAU,
                   samples=DEFAULT_SAMPLES, seed=0, tess=100, resolution=100) -> MetricsReport:
    """Metrics between a predicted OBJ or model file and a ground-truth OBJ.

    Each OBJ is normalized by its own bounding box; a model file is already in
    the normalized frame it was fitted in.
    """
    pred_mesh, pred_vol = _eval_surface(pred, tess)
    gt_mesh, gt_vol = _eval_surface(gt, tess)
    report = MetricsReport(sample_count=samples, f1_threshold=tau, grid_resolution=resolution,
                           extra={"seed": seed, "tess": tess})
    if {"cd", "f1", "nc"} & set(metrics):
        p_pts, p_nrm = sample_mesh(pred_mesh, samples, seed)
        g_pts, g_nrm = sample_mesh(gt_mesh, samples, seed)
        if "cd" in metrics:
            report.cd = chamfer_distance(p_pts, g_pts)
        if "f1" in metrics:
            report.f1 = f1_score(p_pts, g_pts, tau)
        if "nc" in metrics:
            report.nc = normal_consistency(p_pts, p_nrm, g_pts, g_nrm)
    if "viou" in metrics:
        report.viou = viou(pred_vol, gt_vol, resolution)
    return report


def cmd_eval(args) -> int:
    cfg = _config(args, ("seed", "tess", "resolution"))
    try:
        metrics = parse_metric_list(args.metrics)
    except ValueError as exc:
        raise CommandError(str(exc)) from None
    if not args.tau > 0 or args.samples < 1:
        raise CommandError("--tau must be positive and --samples >= 1")
    try:
        report = evaluate_paths(args.pred, args.gt, metrics, args.tau, args.samples, cfg.seed,
                                cfg.tess, cfg.resolution)
    except (EmptySet, DegenerateMesh, NonUnitNormal) as exc:
        raise CommandError(f"{type(exc).__name__}: {exc}", EXIT_DEGENERATE) from None
    print(report.to_json())
    return EXIT_OK


def classify_table(model: PrimitiveModel) -> str:
    lines = [f"{'index':>5}  {'eps1':>10}  {'eps2':>10}  z_class, xy_class"]
    for i, rec in enumerate(model.primitives):
        lines.append(f"{i:>5}  {rec.params.eps1:>10.6f}  {rec.params.eps2:>10.6f}  {rec.shape_class}")
    return "\n".join(lines)


def cmd_classify(args) -> int:
    print(classify_table(read_model(args.input)))
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="primforge", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON file with PipelineConfig fields")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fuse", help="fuse depth views into a TSDF grid")
    p.add_argument("--depth-dir", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--resolution", type=int)
    p.add_argument("--truncation-factor", type=float)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("fit", help="fit a primitive model to an OBJ mesh or TSDF grid")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--alpha", type=float)
    p.add_argument("--min-voxels", type=int)
    p.add_argument("--max-primitives", type=int)
    p.add_argument("--primitive-set")
    p.add_argument("--seed", type=int)
    p.add_argument("--resolution", type=int)
    p.add_argument("--truncation-factor", type=float)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("reconstruct", help="tessellate a model file into an OBJ mesh")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--tess", type=int)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("eval", help="compare a prediction against a ground-truth OBJ")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--metrics", default="cd,viou,f1,nc")
    p.add_argument("--tau", type=float, default=DEFAULT_TAU)
    p.add_argument("--samples", type=int, default=DEFAULT_SAMPLES)
    p.add_argument("--seed", type=int)
    p.add_argument("--tess", type=int)
    p.add_argument("--resolution", type=int)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("classify", help="print the class of every primitive in a model file")
    p.add_argument("--input", required=True)
    p.set_defaults(func=cmd_classify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CommandError as exc:
        print(f"primforge {args.command}: {exc}", file=sys.stderr)
        return exc.code
    except NoInterior as exc:
        print(f"primforge {args.command}: NoInterior: {exc}", file=sys.stderr)
        return EXIT_NO_INTERIOR
    except (FormatError, InvalidModel, EmptyViews, BadPose, DegenerateMesh) as exc:
        msg = str(exc)
        name = type(exc).__name__
        print(f"primforge {args.command}: {msg if msg.startswith(name) else f'{name}: {msg}'}",
              file=sys.stderr)
        return EXIT_IO
    except (OSError, ValueError, PrimforgeError) as exc:
        print(f"primforge {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
