"""Command-line front end.

Exit codes: 0 success, 1 input error, 2 internal invariant violation.
Every output file gets a ``<file>.manifest.json`` next to it.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .config import ConfigError, default_config_text, load_config
from .mesh import MeshFormatError, NotWatertightError, load_mesh


class InvariantError(RuntimeError):
    pass


def _manifest(args, cfg, inputs, outputs):
    from .fileio import RunManifest, manifest_path

    command = " ".join(["suctionbench"] + list(args.argv))
    m = RunManifest.create(command, cfg.raw, [p for p in inputs if p], outputs)
    for out in outputs:
        m.write(manifest_path(out))


def _ensure_parent(path):
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


def _check(cond, message):
    if not cond:
        raise InvariantError(message)


def _scene_and_geometry(path, cfg):
    from .fileio import load_scene_config
    from .scene import SceneGeometry

    scene = load_scene_config(path)
    return scene, SceneGeometry(scene, cfg.collision, surface_spacing=cfg.surface_spacing)


def _object_annotations(scene, geom, cfg, directory):
    from .fileio import read_object_annotation
    from .seal import annotate_object

    anns, inputs = {}, []
    for oid in sorted({i.object_id for i in scene.instances}):
        if directory:
            path = os.path.join(directory, f"{oid}.txt")
            if not os.path.exists(path):
                raise FileNotFoundError(f"missing seal annotation for object {oid!r}: {path}")
            anns[oid] = read_object_annotation(path)
            inputs.append(path)
        else:
            anns[oid] = annotate_object(scene.meshes[oid], cfg.voxel, cfg.cup, cfg.seal, geom.mesh_index(oid))
    return anns, inputs


def _camera(scene, index):
    if not 0 <= index < len(scene.camera_poses):
        raise ValueError(f"camera {index} is not defined in the scene ({len(scene.camera_poses)} cameras)")
    return scene.camera_poses[index]


# ---------------------------------------------------------------------------
# commands

def cmd_annotate_object(args, cfg):
    from .fileio import write_object_annotation
    from .seal import annotate_object
    from .spatial import MeshIndex

    mesh = load_mesh(args.mesh, scale=args.scale)
    ann = annotate_object(mesh, cfg.voxel, cfg.cup, cfg.seal, MeshIndex(mesh, surface_spacing=cfg.surface_spacing))
    _check(np.all((ann.s_seal >= 0) & (ann.s_seal <= 1)), "seal score outside [0, 1]")
    _ensure_parent(args.output)
    write_object_annotation(args.output, ann, source=os.path.basename(args.mesh))
    _manifest(args, cfg, [args.mesh, args.config], [args.output])
    print(f"{len(ann)} candidates, mean S_seal {float(np.mean(ann.s_seal)) if len(ann) else 0.0:.4f} -> {args.output}")


def cmd_annotate_scene(args, cfg):
    from .fileio import write_scene_annotation
    from .scene import annotate_scene

    scene, geom = _scene_and_geometry(args.scene, cfg)
    anns, inputs = _object_annotations(scene, geom, cfg, args.annotations)
    ann = annotate_scene(scene, anns, cfg.wrench, cfg.collision, geom)
    _check(np.allclose(ann.score, ann.s_seal * ann.s_wrench, rtol=0, atol=1e-9), "S != S_seal * S_wrench")
    _check(np.all((ann.score >= 0) & (ann.score <= 1)), "score outside [0, 1]")
    if args.drop_collisions:
        ann = ann.select(ann.collision_free)
    _ensure_parent(args.output)
    write_scene_annotation(args.output, ann)
    _manifest(args, cfg, [args.scene, args.config] + inputs, [args.output])
    print(f"{len(ann)} records, {int(np.sum(~ann.collision_free))} colliding -> {args.output}")


def cmd_evaluate(args, cfg):
    from .evaluation import evaluate_split
    from .fileio import load_scene_config, write_report_csv, write_report_json
    from .scene import SceneGeometry

    if len(args.scene) != len(args.predictions):
        if len(args.scene) == 1:
            args.scene = args.scene * len(args.predictions)
        else:
            raise ValueError("give one scene per prediction file (or a single scene for all)")
    geoms = [SceneGeometry(load_scene_config(p), cfg.collision, surface_spacing=cfg.surface_spacing)
             for p in args.scene]
    names = [os.path.splitext(os.path.basename(p))[0] for p in args.predictions]
    report = evaluate_split(geoms, list(args.predictions), cfg.evaluation, names, cfg.cup, cfg.seal, cfg.wrench)
    for r in report.scenes:
        ap_s = [r.metrics[f"AP_{s:g}"] for s in cfg.evaluation.thresholds]
        _check(abs(r.metrics["AP"] - sum(ap_s) / len(ap_s)) <= 1e-12, "AP is not the mean of AP_s")
        _check(all(0 <= v <= 1 for v in r.metrics.values()), "metric outside [0, 1]")
    os.makedirs(args.output, exist_ok=True)
    json_path = os.path.join(args.output, "report.json")
    csv_path = os.path.join(args.output, "report.csv")
    write_report_json(json_path, report)
    write_report_csv(csv_path, report)
    _manifest(args, cfg, list(args.scene) + list(args.predictions) + [args.config], [json_path, csv_path])
    for r in report.scenes:
        status = "ok" if r.ok else f"FAILED ({r.error})"
        print(f"{r.name}: AP {r.metrics['AP']:.4f} AP-top1 {r.metrics['AP_top1']:.4f} {status}")
    print(f"aggregate: AP {report.aggregate['AP']:.4f} AP-top1 {report.aggregate['AP_top1']:.4f}")


def cmd_baseline(args, cfg):
    from .baselines import normal_std_baseline
    from .fileio import write_heatmap, write_predictions

    scene, geom = _scene_and_geometry(args.scene, cfg)
    pose = _camera(scene, args.camera)
    preds, heat, _, skipped = normal_std_baseline(scene, args.camera, geom, cfg.patch_radius, cfg.sampler,
                                                  cfg.normal_neighbors)
    _check(len(preds) <= cfg.sampler.top_n, "more predictions than top_n")
    _check(len(preds) == 0 or np.abs(np.linalg.norm(preds.normals, axis=1) - 1).max() < 1e-9, "non-unit direction")
    _ensure_parent(args.output)
    write_predictions(args.output, preds.transformed(pose.inverse()), frame=args.camera)
    outputs = [args.output]
    if args.heatmap:
        write_heatmap(args.heatmap, heat)
        outputs.append(args.heatmap)
    _manifest(args, cfg, [args.scene, args.config], outputs)
    print(f"{len(preds)} predictions ({skipped} skipped) -> {args.output}")


def cmd_sample_from_heatmap(args, cfg):
    from .baselines import grid_sample, pixels_to_suctions
    from .fileio import load_scene_config, read_depth, read_heatmap, write_predictions
    from .geometry import CameraIntrinsics

    heat = read_heatmap(args.heatmap)
    depth = read_depth(args.depth)
    if args.scene:
        intr = load_scene_config(args.scene).intrinsics
    elif args.intrinsics:
        with open(args.intrinsics, encoding="utf-8") as fh:
            intr = CameraIntrinsics(**json.load(fh))
    else:
        intr = CameraIntrinsics.default(depth.shape[1], depth.shape[0])
    if heat.shape != depth.shape or depth.shape != (intr.height, intr.width):
        raise ValueError(f"heatmap {heat.shape}, depth {depth.shape} and intrinsics "
                         f"({intr.height}, {intr.width}) disagree")
    samples = grid_sample(heat, cfg.sampler)
    preds, skipped = pixels_to_suctions(samples, depth, intr, k=cfg.normal_neighbors)
    _ensure_parent(args.output)
    write_predictions(args.output, preds, frame=args.camera)
    _manifest(args, cfg, [args.heatmap, args.depth, args.scene, args.intrinsics, args.config], [args.output])
    print(f"{len(preds)} predictions ({skipped} skipped) -> {args.output}")


def cmd_render_labels(args, cfg):
    from .baselines import combine_heatmaps, render_label_heatmaps
    from .fileio import read_scene_annotation, write_heatmap
    from .scene import annotate_scene, render_depth

    scene, geom = _scene_and_geometry(args.scene, cfg)
    pose = _camera(scene, args.camera)
    inputs = [args.scene, args.config]
    if args.scene_annotation:
        ann = read_scene_annotation(args.scene_annotation)
        inputs.append(args.scene_annotation)
    else:
        anns, extra = _object_annotations(scene, geom, cfg, args.annotations)
        inputs += extra
        ann = annotate_scene(scene, anns, cfg.wrench, cfg.collision, geom)
    sigma = cfg.sigma_px if args.sigma is None else args.sigma
    depth = render_depth(scene, scene.intrinsics, pose, geom) if cfg.occlusion_test else None
    seal, center = render_label_heatmaps(ann, scene.intrinsics, pose, sigma, cfg.center_sigma_px, depth)
    outs = [f"{args.output}_seal.bin", f"{args.output}_center.bin", f"{args.output}_combined.bin"]
    _ensure_parent(outs[0])
    for path, grid in zip(outs, (seal, center, combine_heatmaps(seal, center))):
        write_heatmap(path, grid)
    _manifest(args, cfg, inputs, outs)
    print(f"label heatmaps -> {', '.join(outs)}")


def cmd_render_depth(args, cfg):
    from .fileio import write_depth, write_depth_png
    from .scene import render_depth

    scene, geom = _scene_and_geometry(args.scene, cfg)
    pose = _camera(scene, args.camera)
    depth = render_depth(scene, scene.intrinsics, pose, geom)
    _ensure_parent(args.output)
    write_depth(args.output, depth)
    outs = [args.output]
    if args.png:
        write_depth_png(args.png, depth)
        outs.append(args.png)
    _manifest(args, cfg, [args.scene, args.config], outs)
    print(f"{depth.shape[1]}x{depth.shape[0]} depth, {int(np.sum(depth > 0))} valid pixels -> {args.output}")


def cmd_config_init(args, cfg):
    text = default_config_text()
    if args.output:
        _ensure_parent(args.output)
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="suctionbench", description="Analytic suction-grasp labels and evaluation.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="toolkit configuration JSON (defaults: `config init`)")
        sp.set_defaults(func=func)
        return sp

    sp = add("annotate-object", cmd_annotate_object, "seal-score voxel-sampled candidates of one mesh")
    sp.add_argument("mesh", help="triangle mesh (.obj subset)")
    sp.add_argument("-o", "--output", required=True, help="annotation text file")
    sp.add_argument("--scale", type=float, default=1.0, help="multiply mesh coordinates by this to get meters")

    sp = add("annotate-scene", cmd_annotate_scene, "project object labels into a scene, add wrench and collision")
    sp.add_argument("scene", help="scene configuration JSON")
    sp.add_argument("-o", "--output", required=True, help="scene annotation text file")
    sp.add_argument("--annotations", help="directory with <object_id>.txt seal annotations "
                                          "(computed on the fly when omitted)")
    sp.add_argument("--drop-collisions", action="store_true", help="omit colliding records instead of flagging")

    sp = add("evaluate", cmd_evaluate, "score prediction files against scenes")
    sp.add_argument("--scene", nargs="+", required=True, help="scene configuration(s), one per prediction file")
    sp.add_argument("--predictions", nargs="+", required=True, help="prediction file(s)")
    sp.add_argument("-o", "--output", required=True, help="output directory for report.json and report.csv")

    sp = add("baseline-normal-std", cmd_baseline, "Normal STD heuristic predictions for one camera")
    sp.add_argument("scene")
    sp.add_argument("--camera", type=int, default=0, help="camera index in the scene")
    sp.add_argument("-o", "--output", required=True, help="prediction file (camera frame)")
    sp.add_argument("--heatmap", help="also write the score heatmap (binary grid)")

    sp = add("sample-from-heatmap", cmd_sample_from_heatmap, "grid-sample an external heatmap into predictions")
    sp.add_argument("heatmap", help="heatmap binary grid, values in [0, 1]")
    sp.add_argument("--depth", required=True, help="depth binary grid (meters)")
    sp.add_argument("--scene", help="scene configuration supplying intrinsics")
    sp.add_argument("--intrinsics", help="JSON {fx, fy, cx, cy, width, height} (pixels)")
    sp.add_argument("--camera", type=int, default=0, help="camera index written to the file header")
    sp.add_argument("-o", "--output", required=True)

    sp = add("render-labels", cmd_render_labels, "rasterize seal and center label heatmaps")
    sp.add_argument("scene")
    sp.add_argument("--camera", type=int, default=0)
    sp.add_argument("--sigma", type=float, help="Gaussian sigma in pixels (config labels.sigma_px by default)")
    sp.add_argument("--scene-annotation", help="existing scene annotation file")
    sp.add_argument("--annotations", help="directory with per-object seal annotations")
    sp.add_argument("-o", "--output", required=True, help="output prefix")

    sp = add("render-depth", cmd_render_depth, "ray-cast a depth image")
    sp.add_argument("scene")
    sp.add_argument("--camera", type=int, default=0)
    sp.add_argument("-o", "--output", required=True, help="depth binary grid (meters)")
    sp.add_argument("--png", help="also write a 16-bit millimeter PNG")

    cp = sub.add_parser("config", help="configuration helpers")
    csub = cp.add_subparsers(dest="config_command", required=True)
    ip = csub.add_parser("init", help="print the default configuration")
    ip.add_argument("-o", "--output", help="write to a file instead of stdout")
    ip.set_defaults(func=cmd_config_init, config=None)
    return p


INPUT_ERRORS = (OSError, MeshFormatError, NotWatertightError, ConfigError, KeyError, ValueError, IndexError)


def main(argv=None):
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    args = parser.parse_args(argv)
    args.argv = argv
    try:
        cfg = load_config(args.config)
        args.func(args, cfg)
    except InvariantError as exc:
        print(f"internal invariant violated: {exc}", file=sys.stderr)
        return 2
    except INPUT_ERRORS as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
