"""Command-line interface.

Exit codes: 0 success, 2 malformed input or arguments, 3 semantic error (for
example a missing object model). File formats carry millimeters; printed values
are centimeters unless a column name says otherwise.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import io as pio
from .assignment import solve_lap
from .evaluation import build_report, dataset_stats, default_curve_thresholds_cm, detection_curve
from .exceptions import (
    DegenerateSamples,
    MalformedInput,
    MissingModel,
    NoValidPixels,
    NonConvergence,
    PosevalError,
    TooFewObjects,
)
from .fieldcal import cross_view_validate, fit_depth_scale, fit_nakagami, refine_depth_ls
from .geometry import Pose
from .metrics import MetricKind, correspondence_map, pose_error
from .models import SampledModel, procedural_model, subsample
from .simulation import RotationMode, simulate_metric_comparison
from .symmetry import generate_symmetries

EXIT_OK, EXIT_INPUT, EXIT_SEMANTIC = 0, 2, 3
JOBS_ENV = "POSEVAL_JOBS"

FORMATS_HELP = """\
file formats (lengths in millimeters unless noted):
  ground truth   directory of BOP scenes (<dir>/<scene_id>/scene_gt.json) or one
                 scene_gt.json: {"<im_id>": [{"obj_id", "cam_R_m2c": 9 reals row-major,
                 "cam_t_m2c": 3 reals, optional "visib_fract", optional "tag"}]}
  predictions    CSV header scene_id,im_id,obj_id,score,R,t,time; R = 9 and t = 3
                 space-separated reals
  models config  JSON {"<obj_id>": {"mesh": path relative to the config,
                 "symmetry": cylinder|cuboid|bottle|none, optional "reorient": 9 reals}}
  meshes         ASCII OBJ (v lines) or ASCII / binary little-endian PLY vertices
  depth          raw row-major little-endian uint16 grid, 0 = invalid
  camera         JSON {fx, fy, cx, cy, width, height} or {cam_K, width, height}
  views          JSON list of {"obj_id", "cam_R_m2c", "cam_t_m2c"}
  depth pairs    CSV with columns reference_m, measured_m (meters)
Every output file starts with a metadata header (version, seed, config hash).
"""


def _default_jobs():
    try:
        return max(1, int(os.environ.get(JOBS_ENV, "1")))
    except ValueError:
        return 1


def _config(args):
    # worker count never changes results, so it stays out of the hash
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "jobs")}


def _meta(args):
    return pio.metadata(_config(args), getattr(args, "seed", None))


def _need_file(path, what):
    if not Path(path).exists():
        raise MalformedInput(f"{what} not found", str(path))


def _parse_pose(text, what):
    """Pose from a JSON file holding one BOP record, or 12 inline numbers (R row-major, t in mm)."""
    if Path(text).exists():
        data = json.loads(Path(text).read_text())
        if isinstance(data, list):
            data = data[0]
        return pio.pose_from_bop(data["cam_R_m2c"], data["cam_t_m2c"], text)
    vals = [float(x) for x in text.replace(",", " ").split()]
    if len(vals) != 12:
        raise MalformedInput(f"{what} needs 12 numbers (9 rotation, 3 translation in mm)")
    return pio.pose_from_bop(vals[:9], vals[9:], what)


def _single_model(args):
    if args.model:
        _need_file(args.model, "mesh")
        return SampledModel.from_vertices(pio.load_mesh_vertices(args.model), args.symmetry, k=args.k)
    if args.models and args.obj_id is not None:
        _need_file(args.models, "models config")
        models = pio.load_models_config(args.models, k=args.k)
        if args.obj_id not in models:
            raise MissingModel(args.obj_id)
        return models[args.obj_id]
    raise MalformedInput("give --model MESH or --models CONFIG --obj-id ID")


def _fmt(v):
    return "-" if v is None else f"{v:.2f}"


# -- commands ------------------------------------------------------------------------


def _load_eval_inputs(args):
    _need_file(args.gt, "ground truth")
    _need_file(args.predictions, "predictions")
    _need_file(args.models, "models config")
    gts = pio.load_ground_truth(args.gt)
    preds = pio.load_predictions(args.predictions)
    if args.tag is not None:
        gts = [g for g in gts if g.tag == args.tag]
        keep = {g.image_key for g in gts}
        preds = [p for p in preds if p.image_key in keep]
    if not gts:
        raise MalformedInput("no ground-truth instances to evaluate", args.gt)
    return gts, preds, pio.load_models_config(args.models, k=args.k)


def cmd_eval(args):
    gts, preds, models = _load_eval_inputs(args)
    thresholds = [float(x) for x in args.thresholds.split(",")]
    report = build_report(gts, preds, args.metric, models, thresholds_cm=thresholds, jobs=args.jobs)
    meta = _meta(args)
    out = Path(args.out)
    pio.atomic_write_text(out.with_suffix(".json"), pio.format_json(meta, report.as_dict()))
    rows = [r.as_dict() for r in report.rows()]
    header = list(rows[0])
    pio.atomic_write_text(out.with_suffix(".csv"), pio.format_csv(meta, header, [[r[h] for h in header] for r in rows]))
    curve_path = out.with_name(out.stem + "_curve.csv")
    pio.atomic_write_text(curve_path, pio.format_csv(meta, ["threshold_cm", "recall"], report.curve))
    o = report.overall
    print(f"{report.metric.label}: {o.n_gt} GT, {o.n_pred} predictions")
    print("  median TP error (cm): " + _fmt(o.median_error_cm))
    for tau in thresholds:
        print(f"  @{tau:g}cm precision {_fmt(o.precision[tau])}%  recall {_fmt(o.recall[tau])}%")
    return EXIT_OK


def cmd_curve(args):
    gts, preds, models = _load_eval_inputs(args)
    taus = default_curve_thresholds_cm(args.min_cm, args.max_cm, args.step_cm)
    curve = detection_curve(gts, preds, args.metric, models, taus, jobs=args.jobs)
    text = pio.format_csv(_meta(args), ["threshold_cm", "recall"], curve)
    if args.out:
        pio.atomic_write_text(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_stats(args):
    _need_file(args.gt, "ground truth")
    gts = pio.load_ground_truth(args.gt)
    models = pio.load_models_config(args.models, k=args.k) if args.models else None
    rows, summary = dataset_stats(gts, models)
    table = [[r.object_id, r.count, r.diameter_cm, r.distance_cm, r.visibility_pct] for r in rows]
    text = pio.format_csv(_meta(args), ["obj_id", "count", "diameter_cm", "distance_cm", "visibility_pct"], table)
    if args.out:
        pio.atomic_write_text(args.out, text)
    else:
        sys.stdout.write(text)
    print(json.dumps(summary), file=sys.stderr)
    return EXIT_OK


def _simulation_models(args):
    if args.models:
        _need_file(args.models, "models config")
        return list(pio.load_models_config(args.models, k=args.k).values())
    return [procedural_model(c, object_id=i) for i, c in enumerate(("cylinder", "cuboid", "bottle"), start=1)]


def cmd_simulate(args):
    models = _simulation_models(args)
    modes = [RotationMode.parse(m) for m in args.modes.split(",")]
    rows = []
    for mode in modes:
        table = simulate_metric_comparison(models, args.max_cm, args.step_cm, args.trials, mode,
                                           args.seed, jobs=args.jobs)
        for k, step in enumerate(table.steps_cm):
            for m in table.metrics:
                rows.append([mode.value, step, m.label, float(table.mean[m][k]), float(table.std[m][k])])
    text = pio.format_csv(_meta(args), ["mode", "translation_cm", "metric", "mean_cm", "std_cm"], rows)
    if args.out:
        pio.atomic_write_text(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_metric(args):
    model = _single_model(args)
    gt, pred = _parse_pose(args.gt, "--gt"), _parse_pose(args.pred, "--pred")
    print(f"{100.0 * pose_error(args.kind, gt, pred, model):.6f}")
    return EXIT_OK


def cmd_assignments(args):
    model = _single_model(args)
    gt, pred = _parse_pose(args.gt, "--gt"), _parse_pose(args.pred, "--pred")
    cmap = correspondence_map(args.kind, gt, pred, model)
    rows = [[int(a), int(b), 100.0 * float(d)] for (a, b), d in zip(cmap.pairs, cmap.distances)]
    text = pio.format_csv(_meta(args), ["gt_index", "pred_index", "distance_cm"], rows)
    if args.out:
        pio.atomic_write_text(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_calibrate_depth(args):
    _need_file(args.pairs, "depth pairs")
    ref, meas = pio.load_depth_pairs(args.pairs)
    cal = fit_depth_scale(ref, meas)
    print(f"scale {cal.scale:.6f}")
    print(f"mean absolute difference before {1000 * cal.mae_before:.2f} mm, after {1000 * cal.mae_after:.2f} mm "
          f"({cal.sample_count} pairs)")
    return EXIT_OK


def cmd_refine_ls(args):
    for p, what in ((args.depth, "depth map"), (args.camera, "camera"), (args.models, "models config"),
                    (args.predictions, "predictions")):
        _need_file(p, what)
    cam = pio.load_camera(args.camera)
    depth = pio.load_depth_raw(args.depth, cam.width, cam.height, args.depth_scale)
    mask = None
    if args.mask:
        mask = pio.load_depth_raw(args.mask, cam.width, cam.height) > 0
    models = pio.load_models_config(args.models, k=args.k)
    preds = pio.load_predictions(args.predictions)
    out = []
    for p in preds:
        if p.object_id not in models:
            raise MissingModel(p.object_id)
        res = refine_depth_ls(p.pose, models[p.object_id], cam, depth, (args.alpha_min, args.alpha_max),
                              args.steps, mask)
        out.append(type(p)(p.scene_id, p.image_id, p.object_id, res.pose, p.score, p.time))
        print(f"obj {p.object_id} score {p.score:.3f}: alpha {res.alpha:.4f}")
    text = pio.csv_header_line(_meta(args)) + pio.format_predictions(out)
    pio.atomic_write_text(args.out, text)
    return EXIT_OK


def cmd_validate_views(args):
    if len(args.a) != len(args.b):
        raise MalformedInput("give the same number of --a and --b views")
    _need_file(args.models, "models config")
    models = pio.load_models_config(args.models, k=args.k)
    rows, errors = [], []
    for scene, (fa, fb) in enumerate(zip(args.a, args.b)):
        _need_file(fa, "view")
        _need_file(fb, "view")
        va, vb = pio.load_view(fa), pio.load_view(fb)
        for o, _ in va + vb:
            if o not in models:
                raise MissingModel(o)
        for r in cross_view_validate(va, vb, models, trim_fraction=args.trim):
            rows.append([scene, r.object_id, 1000.0 * r.add_error, int(r.inliers.sum()), len(r.inliers)])
            errors.append(1000.0 * r.add_error)
    meta = _meta(args)
    text = pio.format_csv(meta, ["scene", "obj_id", "add_mm", "inliers", "correspondences"], rows)
    if args.out:
        pio.atomic_write_text(args.out, text)
    else:
        sys.stdout.write(text)
    e = np.array(errors)
    print(f"ADD mean {e.mean():.2f} mm, median {np.median(e):.2f} mm over {len(e)} objects", file=sys.stderr)
    try:
        fit = fit_nakagami(e)
        print(f"Nakagami fit (mm): m={fit.m:.3f} omega={fit.omega:.3f} mean={fit.mean:.3f} mode={fit.mode:.3f}",
              file=sys.stderr)
    except DegenerateSamples as exc:
        print(f"Nakagami fit skipped: {exc}", file=sys.stderr)
    return EXIT_OK


def cmd_lap(args):
    if args.bench:
        rng = np.random.default_rng(args.seed)
        n = args.bench
        solve_lap(rng.uniform(0, 10, (2, 2)))  # warm the compiled solver
        times = []
        for _ in range(args.repeats):
            C = rng.uniform(0.0, 10.0, (n, n))
            t0 = time.perf_counter()
            solve_lap(C)
            times.append(time.perf_counter() - t0)
        print(f"n={n}: median {1000 * float(np.median(times)):.1f} ms, max {1000 * max(times):.1f} ms "
              f"over {args.repeats} solves")
        return EXIT_OK
    if not args.matrix:
        raise MalformedInput("give --matrix FILE or --bench N")
    _need_file(args.matrix, "matrix")
    res = solve_lap(pio.load_matrix_csv(args.matrix))
    print("permutation " + " ".join(str(int(j)) for j in res.permutation))
    print(f"cost {res.total_cost:g}")
    return EXIT_OK


def cmd_symmetries(args):
    symset = generate_symmetries(args.symmetry_class, args.increment)
    sys.stdout.write(json.dumps([R.ravel().tolist() for R in symset]) + "\n")
    return EXIT_OK


def cmd_sample_mesh(args):
    _need_file(args.mesh, "mesh")
    verts = pio.load_mesh_vertices(args.mesh)
    idx = subsample(verts, args.k)
    text = pio.format_csv(_meta(args), ["index", "x_mm", "y_mm", "z_mm"],
                          [[int(i), *(1000.0 * verts[i]).tolist()] for i in idx])
    if args.out:
        pio.atomic_write_text(args.out, text)
    else:
        sys.stdout.write(text)
    print(f"{len(idx)} of {len(verts)} vertices", file=sys.stderr)
    return EXIT_OK


# -- parser --------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="poseval", description="Symmetry-aware 6-DoF pose evaluation.",
        epilog=FORMATS_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"poseval {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_, description=help_, epilog=FORMATS_HELP,
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        p.set_defaults(func=func)
        p.add_argument("--seed", type=int, default=0, help="random seed, recorded in outputs (default 0)")
        p.add_argument("--k", type=int, default=500, help="model vertices kept per object (default 500)")
        return p

    def eval_inputs(p):
        p.add_argument("--gt", required=True, help="ground-truth scene directory or scene_gt.json")
        p.add_argument("--predictions", required=True, help="BOP-style predictions CSV")
        p.add_argument("--models", required=True, help="models config JSON")
        p.add_argument("--metric", default="meanssd", type=MetricKind.parse,
                       help="add | add-s | meanssd | mssd | add-h (default meanssd)")
        p.add_argument("--tag", help="only evaluate images whose GT records carry this tag")
        p.add_argument("--jobs", type=int, default=_default_jobs(),
                       help=f"worker threads (default ${JOBS_ENV} or 1)")

    p = add("eval", cmd_eval, "results table (JSON + CSV) and detection-rate curve")
    eval_inputs(p)
    p.add_argument("--thresholds", default="2,10", help="comma-separated thresholds in cm (default 2,10)")
    p.add_argument("--out", required=True, help="output prefix; writes .json, .csv and _curve.csv")

    p = add("curve", cmd_curve, "detection rate versus absolute threshold")
    eval_inputs(p)
    p.add_argument("--min-cm", type=float, default=0.5)
    p.add_argument("--max-cm", type=float, default=10.0)
    p.add_argument("--step-cm", type=float, default=0.1)
    p.add_argument("--out", help="output CSV (default stdout)")

    p = add("stats", cmd_stats, "per-object ground-truth statistics")
    p.add_argument("--gt", required=True)
    p.add_argument("--models")
    p.add_argument("--out")

    p = add("simulate", cmd_simulate, "compare metrics under random rotation and growing translation")
    p.add_argument("--models", help="models config JSON (default: procedural cylinder, cuboid, bottle)")
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--max-cm", type=float, default=10.0)
    p.add_argument("--step-cm", type=float, default=1.0)
    p.add_argument("--modes", default="symmetry_preserving,arbitrary",
                   help="comma-separated: symmetry_preserving, arbitrary, identity")
    p.add_argument("--jobs", type=int, default=_default_jobs())
    p.add_argument("--out", help="output CSV (default stdout)")

    for name, func, help_ in (("metric", cmd_metric, "error between two poses, printed in cm"),
                              ("assignments", cmd_assignments, "vertex pairing used by a metric, as CSV")):
        p = add(name, func, help_)
        p.add_argument("--kind", required=True, type=MetricKind.parse)
        p.add_argument("--gt", required=True, help="pose JSON file or 12 numbers: R row-major, t in mm")
        p.add_argument("--pred", required=True, help="same format as --gt")
        p.add_argument("--model", help="mesh file (mm)")
        p.add_argument("--symmetry", default="none", help="symmetry class for --model")
        p.add_argument("--models", help="models config JSON (with --obj-id)")
        p.add_argument("--obj-id", type=int)
        if name == "assignments":
            p.add_argument("--out", help="output CSV (default stdout)")

    p = add("calibrate-depth", cmd_calibrate_depth, "fit a depth scale factor")
    p.add_argument("--pairs", required=True, help="CSV with reference_m, measured_m")

    p = add("refine-ls", cmd_refine_ls, "line-search depth refinement of predicted translations")
    p.add_argument("--depth", required=True)
    p.add_argument("--depth-scale", type=float, default=1.0, help="millimeters per depth unit (default 1)")
    p.add_argument("--mask", help="optional raw uint16 mask, nonzero = object")
    p.add_argument("--camera", required=True)
    p.add_argument("--models", required=True)
    p.add_argument("--predictions", required=True, help="predictions for this depth image")
    p.add_argument("--alpha-min", type=float, default=0.7)
    p.add_argument("--alpha-max", type=float, default=1.3)
    p.add_argument("--steps", type=int, default=121)
    p.add_argument("--out", required=True, help="refined predictions CSV")

    p = add("validate-views", cmd_validate_views, "leave-one-out annotation check across two views")
    p.add_argument("--a", action="append", required=True, help="view A annotations (repeat per scene)")
    p.add_argument("--b", action="append", required=True, help="view B annotations (repeat per scene)")
    p.add_argument("--models", required=True)
    p.add_argument("--trim", type=float, default=0.2)
    p.add_argument("--out", help="per-object ADD CSV (default stdout)")

    p = add("lap", cmd_lap, "solve a linear sum assignment or time the solver")
    p.add_argument("--matrix", help="square cost matrix CSV")
    p.add_argument("--bench", type=int, help="time random n x n solves")
    p.add_argument("--repeats", type=int, default=5)

    p = add("symmetries", cmd_symmetries, "dump a symmetry set as JSON (9-entry row-major matrices)")
    p.add_argument("--class", dest="symmetry_class", required=True)
    p.add_argument("--increment", type=float, default=1.0, help="cylinder step in degrees (default 1)")

    p = add("sample-mesh", cmd_sample_mesh, "farthest-point subsample of a mesh")
    p.add_argument("--mesh", required=True)
    p.add_argument("--out")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except MissingModel as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_SEMANTIC
    except (TooFewObjects, NoValidPixels, NonConvergence, DegenerateSamples) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_SEMANTIC
    except (PosevalError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
