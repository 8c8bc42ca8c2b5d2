"""Readers and writers for every on-disk artifact.

Binary grid (depth images and heatmaps): two little-endian uint32
(width, height) followed by width*height little-endian float32 values,
row-major. Depth is in meters, 0 = invalid; heatmaps are clamped to [0, 1].

Text tables start with ``#`` comment lines; the last comment line before
the data names the columns.
"""
from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .evaluation import EvalReport, Predictions, metric_names
from .geometry import CameraIntrinsics, RigidTransform
from .mesh import load_mesh
from .primitives import make_primitive
from .scene import ObjectInstance, Scene, SceneAnnotation
from .seal import ObjectAnnotation


class PredictionFileError(ValueError):
    def __init__(self, path, lineno, message):
        self.path = path
        self.lineno = lineno
        super().__init__(f"{path}:{lineno}: {message}")


class SceneConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# binary grids

_HEADER = np.dtype([("width", "<u4"), ("height", "<u4")])


def write_grid(path, grid):
    grid = np.asarray(grid)
    if grid.ndim != 2:
        raise ValueError("grid must be 2-D")
    h, w = grid.shape
    with open(path, "wb") as fh:
        fh.write(np.array([(w, h)], dtype=_HEADER).tobytes())
        fh.write(np.ascontiguousarray(grid, dtype="<f4").tobytes())


def read_grid(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.itemsize:
        raise ValueError(f"{path}: truncated grid header")
    hdr = np.frombuffer(raw[:_HEADER.itemsize], dtype=_HEADER)[0]
    w, h = int(hdr["width"]), int(hdr["height"])
    body = raw[_HEADER.itemsize:]
    if len(body) != 4 * w * h:
        raise ValueError(f"{path}: expected {w}x{h} float32 values, got {len(body)} bytes")
    return np.frombuffer(body, dtype="<f4").reshape(h, w).astype(np.float64)


def write_depth(path, depth):
    depth = np.asarray(depth, dtype=np.float64)
    if not np.isfinite(depth).all() or (depth < 0).any():
        raise ValueError("depth must be finite and non-negative")
    write_grid(path, depth)


def read_depth(path):
    return read_grid(path)


def write_heatmap(path, heatmap):
    write_grid(path, np.clip(np.asarray(heatmap, dtype=np.float64), 0.0, 1.0))


def read_heatmap(path):
    return np.clip(read_grid(path), 0.0, 1.0)


def write_depth_png(path, depth):
    """Lossless 16-bit PNG in millimeters (depth rounded to the nearest mm)."""
    from PIL import Image

    mm = np.rint(np.asarray(depth, dtype=np.float64) * 1000.0)
    if (mm > 65535).any():
        raise ValueError("depth beyond 65.535 m does not fit a 16-bit millimeter image")
    Image.fromarray(mm.astype(np.uint16)).save(path)


def read_depth_png(path):
    from PIL import Image

    with Image.open(path) as im:
        return np.asarray(im, dtype=np.float64) / 1000.0


# ---------------------------------------------------------------------------
# text tables

def _fmt(x):
    return repr(float(x))


def _read_table(path, ncols, error=ValueError):
    rows, lines = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != ncols:
                raise error(path, lineno, f"expected {ncols} columns, got {len(parts)}")
            rows.append(parts)
            lines.append(lineno)
    return rows, lines


OBJECT_COLUMNS = "x y z nx ny nz s_seal s_deform s_fit"


def write_object_annotation(path, ann: ObjectAnnotation, source=""):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# per-object seal annotation, object frame, meters\n")
        if source:
            fh.write(f"# source: {source}\n")
        fh.write(f"# candidates: {len(ann)}\n")
        fh.write(f"# {OBJECT_COLUMNS}\n")
        for i in range(len(ann)):
            vals = [*ann.points[i], *ann.normals[i], ann.s_seal[i], ann.s_deform[i], ann.s_fit[i]]
            fh.write(" ".join(_fmt(v) for v in vals) + "\n")


def _table_error(path, lineno, message):
    return ValueError(f"{path}:{lineno}: {message}")


def read_object_annotation(path) -> ObjectAnnotation:
    if not os.path.exists(path):
        raise FileNotFoundError(f"annotation file not found: {path}")
    rows, lines = _read_table(path, 9, _table_error)
    try:
        a = np.array(rows, dtype=np.float64).reshape(-1, 9)
    except ValueError:
        raise ValueError(f"{path}: non-numeric value in annotation table") from None
    return ObjectAnnotation(a[:, 0:3], a[:, 3:6], a[:, 6], a[:, 7], a[:, 8])


SCENE_COLUMNS = "object_id instance candidate x y z nx ny nz s_seal s_wrench s collision_free"


def write_scene_annotation(path, ann: SceneAnnotation):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# scene suction annotation, world frame, meters\n")
        fh.write(f"# records: {len(ann)}\n")
        for k, c in enumerate(ann.object_centers):
            fh.write(f"# center {k} {_fmt(c[0])} {_fmt(c[1])} {_fmt(c[2])}\n")
        fh.write(f"# {SCENE_COLUMNS}\n")
        for i in range(len(ann)):
            vals = [*ann.points[i], *ann.normals[i], ann.s_seal[i], ann.s_wrench[i], ann.score[i]]
            fh.write(f"{ann.object_ids[i]} {int(ann.instances[i])} {int(ann.candidates[i])} "
                     + " ".join(_fmt(v) for v in vals) + f" {int(bool(ann.collision_free[i]))}\n")


def read_scene_annotation(path) -> SceneAnnotation:
    centers = []
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            if raw.startswith("# center "):
                centers.append([float(x) for x in raw.split()[3:6]])
    rows, _ = _read_table(path, 13, _table_error)
    ids = np.array([r[0] for r in rows], dtype=object)
    ints = np.array([r[1:3] for r in rows], dtype=np.int64).reshape(-1, 2)
    f = np.array([r[3:12] for r in rows], dtype=np.float64).reshape(-1, 9)
    free = np.array([r[12] == "1" for r in rows], dtype=bool)
    return SceneAnnotation(ids, ints[:, 0], ints[:, 1], f[:, 0:3], f[:, 3:6], f[:, 6], f[:, 7], f[:, 8], free,
                           np.array(centers, dtype=np.float64).reshape(-1, 3))


# ---------------------------------------------------------------------------
# predictions

def write_predictions(path, preds: Predictions, frame="world"):
    """frame is "world" or a camera index."""
    header = "world" if frame == "world" else f"camera {int(frame)}"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# frame: {header}\n")
        fh.write("# x y z nx ny nz confidence\n")
        for p, n, c in zip(preds.points, preds.normals, preds.confidence):
            fh.write(" ".join(_fmt(v) for v in (*p, *n, c)) + "\n")


def read_predictions(path, scene: Scene | None = None, normalize=True) -> Predictions:
    """Read a prediction file and return world-frame predictions.

    Camera-frame files are moved to world with the scene's camera pose.
    Directions are renormalized unless `normalize` is False.
    """
    path = os.fspath(path)
    if not os.path.exists(path):
        raise FileNotFoundError(f"prediction file not found: {path}")
    frame = None
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.lower().startswith("frame:"):
                    fields = body.split(":", 1)[1].split()
                    if fields == ["world"]:
                        frame = "world"
                    elif len(fields) == 2 and fields[0] == "camera" and fields[1].isdigit():
                        frame = int(fields[1])
                    else:
                        raise PredictionFileError(path, lineno, f"unknown frame declaration {body!r}")
                continue
            parts = line.split()
            if len(parts) != 7:
                raise PredictionFileError(path, lineno, f"expected 7 columns, got {len(parts)}")
            try:
                vals = [float(x) for x in parts]
            except ValueError:
                raise PredictionFileError(path, lineno, "non-numeric value") from None
            if not np.isfinite(vals).all():
                raise PredictionFileError(path, lineno, "non-finite value")
            n = np.linalg.norm(vals[3:6])
            if n == 0:
                raise PredictionFileError(path, lineno, "zero direction vector")
            if normalize:
                vals[3:6] = [v / n for v in vals[3:6]]
            elif abs(n - 1) > 1e-6:
                raise PredictionFileError(path, lineno, "direction is not unit length")
            rows.append(vals)
    if frame is None:
        raise PredictionFileError(path, 1, "missing '# frame: world' or '# frame: camera <i>' header")
    a = np.array(rows, dtype=np.float64).reshape(-1, 7)
    preds = Predictions(a[:, :3], a[:, 3:6], a[:, 6])
    if frame != "world":
        if scene is None or frame >= len(scene.camera_poses):
            raise PredictionFileError(path, 1, f"camera {frame} is not defined in the scene")
        preds = preds.transformed(scene.camera_poses[frame])
    return preds


# ---------------------------------------------------------------------------
# reports

def write_report_json(path, report: EvalReport):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=False)
        fh.write("\n")


def write_report_csv(path, report: EvalReport):
    names = metric_names(report.config)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["scene", "ok"] + names)
        for r in report.scenes:
            w.writerow([r.name, int(r.ok)] + [repr(r.metrics[k]) for k in names])
        w.writerow(["aggregate", 1] + [repr(report.aggregate[k]) for k in names])


# ---------------------------------------------------------------------------
# run manifests

def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def config_hash(config: dict):
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


@dataclass
class RunManifest:
    command: str
    config_hash: str
    inputs: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    version: str = __version__
    timestamp: str = ""

    @classmethod
    def create(cls, command, config: dict, inputs=(), outputs=()):
        hashes = {os.fspath(p): file_sha256(p) for p in inputs if os.path.isfile(p)}
        stamp = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
        return cls(command, config_hash(config), hashes, [os.fspath(p) for p in outputs], __version__, stamp)

    def write(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(asdict(self), fh, indent=2)
            fh.write("\n")


def manifest_path(output_path):
    return os.fspath(output_path) + ".manifest.json"


# ---------------------------------------------------------------------------
# scene configuration

def _pose(values, where):
    try:
        return RigidTransform.from_matrix(np.asarray(values, dtype=np.float64))
    except (ValueError, TypeError) as exc:
        raise SceneConfigError(f"{where}: {exc}") from None


def _mesh_entry(name, entry, base):
    if isinstance(entry, str):
        entry = {"path": entry}
    if "path" in entry:
        path = entry["path"]
        if not os.path.isabs(path):
            path = os.path.join(base, path)
        return load_mesh(path, scale=float(entry.get("scale", 1.0)))
    if "primitive" in entry:
        dims = {k: (tuple(v) if isinstance(v, list) else v) for k, v in entry.items() if k != "primitive"}
        return make_primitive(entry["primitive"], **dims)
    raise SceneConfigError(f"mesh {name!r}: needs 'path' or 'primitive'")


def scene_from_dict(cfg: dict, base="."):
    """Build a Scene from a parsed scene configuration.

    Keys: ``meshes`` {id: path | {path, scale} | {primitive, dims...}},
    ``instances`` [{object, pose: 12 row-major numbers}], optional
    ``cameras`` [12 numbers each, camera->world], ``intrinsics``
    {fx, fy, cx, cy, width, height}, ``gravity`` [x, y, z], ``table`` bool.
    """
    if not isinstance(cfg, dict):
        raise SceneConfigError("scene configuration must be a JSON object")
    meshes = {name: _mesh_entry(name, e, base) for name, e in cfg.get("meshes", {}).items()}
    instances = []
    for k, item in enumerate(cfg.get("instances", [])):
        if item.get("object") not in meshes:
            raise SceneConfigError(f"instance {k}: unknown object {item.get('object')!r}")
        instances.append(ObjectInstance(item["object"], _pose(item.get("pose", np.eye(4)[:3].ravel()), f"instance {k}")))
    if not instances:
        raise SceneConfigError("scene configuration lists no object instances")
    cams = [_pose(c, f"camera {k}") for k, c in enumerate(cfg.get("cameras", []))]
    intr = cfg.get("intrinsics")
    intr = CameraIntrinsics(**intr) if intr else CameraIntrinsics.default()
    gravity = cfg.get("gravity", [0.0, 0.0, -1.0])
    return Scene(instances, meshes, cams, tuple(float(g) for g in gravity), intr, bool(cfg.get("table", True)))


def load_scene_config(path) -> Scene:
    path = os.fspath(path)
    if not os.path.exists(path):
        raise FileNotFoundError(f"scene configuration not found: {path}")
    with open(path, encoding="utf-8") as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SceneConfigError(f"{path}:{exc.lineno}: {exc.msg}") from None
    return scene_from_dict(cfg, os.path.dirname(os.path.abspath(path)))


def scene_to_dict(scene: Scene, mesh_entries: dict):
    out = {
        "meshes": mesh_entries,
        "instances": [{"object": i.object_id, "pose": i.pose.row_major_12().tolist()} for i in scene.instances],
        "cameras": [c.row_major_12().tolist() for c in scene.camera_poses],
        "gravity": list(scene.gravity),
        "table": scene.table,
    }
    if scene.intrinsics is not None:
        out["intrinsics"] = asdict(scene.intrinsics)
    return out
