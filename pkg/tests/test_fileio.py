import json

import numpy as np
import pytest

from suctionbench.evaluation import EvalConfig, Predictions, evaluate_split
from suctionbench.fileio import (
    PredictionFileError,
    RunManifest,
    SceneConfigError,
    config_hash,
    load_scene_config,
    manifest_path,
    read_depth,
    read_depth_png,
    read_grid,
    read_heatmap,
    read_object_annotation,
    read_predictions,
    read_scene_annotation,
    scene_from_dict,
    scene_to_dict,
    write_depth,
    write_depth_png,
    write_grid,
    write_heatmap,
    write_object_annotation,
    write_predictions,
    write_report_csv,
    write_report_json,
    write_scene_annotation,
)
from suctionbench.geometry import RigidTransform, look_at
from suctionbench.primitives import cuboid
from suctionbench.scene import annotate_scene, tabletop_scene
from suctionbench.seal import annotate_object


def test_grid_roundtrip(tmp_path, rng):
    g = rng.uniform(size=(7, 11)).astype(np.float32)
    write_grid(tmp_path / "g.bin", g)
    raw = (tmp_path / "g.bin").read_bytes()
    assert np.frombuffer(raw[:8], "<u4").tolist() == [11, 7]
    assert np.array_equal(read_grid(tmp_path / "g.bin"), g)


def test_grid_truncated(tmp_path):
    (tmp_path / "t.bin").write_bytes(np.array([4, 4], "<u4").tobytes() + b"\0" * 10)
    with pytest.raises(ValueError):
        read_grid(tmp_path / "t.bin")


def test_depth_and_heatmap(tmp_path):
    d = np.array([[0.5, 0.0], [1.25, 2.0]])
    write_depth(tmp_path / "d.bin", d)
    assert np.array_equal(read_depth(tmp_path / "d.bin"), d)
    write_heatmap(tmp_path / "h.bin", np.array([[1.5, -0.5]]))
    assert read_heatmap(tmp_path / "h.bin").tolist() == [[1.0, 0.0]]
    write_depth_png(tmp_path / "d.png", d)
    assert np.allclose(read_depth_png(tmp_path / "d.png"), d, atol=5e-4)


def test_object_annotation_roundtrip(tmp_path):
    ann = annotate_object(cuboid((0.04, 0.04, 0.02)), 0.01)
    write_object_annotation(tmp_path / "a.txt", ann, source="box.obj")
    back = read_object_annotation(tmp_path / "a.txt")
    assert np.array_equal(back.points, ann.points)
    assert np.array_equal(back.s_seal, ann.s_seal)


def test_scene_annotation_roundtrip(tmp_path):
    box = cuboid((0.04, 0.04, 0.02))
    scene = tabletop_scene({"box": box}, [("box", (0.0, 0.0)), ("box", (0.1, 0.0))])
    ann = annotate_scene(scene, {"box": annotate_object(box, 0.01)})
    write_scene_annotation(tmp_path / "s.txt", ann)
    back = read_scene_annotation(tmp_path / "s.txt")
    for field in ("points", "normals", "s_seal", "s_wrench", "score", "collision_free", "object_centers",
                  "instances", "candidates"):
        assert np.array_equal(getattr(back, field), getattr(ann, field)), field
    assert list(back.object_ids) == list(ann.object_ids)


def test_predictions_world_and_camera(tmp_path, rng):
    cam = look_at((0.1, -0.3, 0.5), (0, 0, 0))
    scene = tabletop_scene({"box": cuboid((0.04, 0.04, 0.02))}, [("box", (0.0, 0.0))])
    scene = type(scene)(scene.instances, scene.meshes, [cam], intrinsics=scene.intrinsics)
    n = rng.normal(size=(5, 3))
    preds = Predictions(rng.normal(size=(5, 3)), n / np.linalg.norm(n, axis=1, keepdims=True), rng.uniform(size=5))
    write_predictions(tmp_path / "w.txt", preds)
    back = read_predictions(tmp_path / "w.txt")
    assert np.array_equal(back.points, preds.points) and np.array_equal(back.confidence, preds.confidence)
    write_predictions(tmp_path / "c.txt", preds.transformed(cam.inverse()), frame=0)
    world = read_predictions(tmp_path / "c.txt", scene)
    assert np.allclose(world.points, preds.points, atol=1e-12)
    with pytest.raises(PredictionFileError):
        read_predictions(tmp_path / "c.txt", None)


@pytest.mark.parametrize("body,lineno", [
    ("0 0 0 0 0 1 1\n", 1),
    ("# frame: world\n0 0 0 0 0 1\n", 2),
    ("# frame: world\n0 0 0 0 0 1 x\n", 2),
    ("# frame: world\n0 0 0 0 0 0 1\n", 2),
    ("# frame: world\n0 0 0 0 0 1 nan\n", 2),
    ("# frame: moon\n", 1),
])
def test_prediction_errors(tmp_path, body, lineno):
    path = tmp_path / "p.txt"
    path.write_text(body)
    with pytest.raises(PredictionFileError) as exc:
        read_predictions(path)
    assert exc.value.lineno == lineno


def test_prediction_normalization(tmp_path):
    path = tmp_path / "p.txt"
    path.write_text("# frame: world\n0 0 0 0 0 2 1\n")
    assert np.allclose(read_predictions(path).normals, [[0, 0, 1]])
    with pytest.raises(PredictionFileError):
        read_predictions(path, normalize=False)


def test_reports(tmp_path, smooth_geometry):
    inst = smooth_geometry.scene.instances[0]
    preds = Predictions([inst.pose.apply([0, 0, 0.025])], [[0, 0, 1.0]], [1.0])
    rep = evaluate_split([smooth_geometry], [preds], EvalConfig(top_k=1))
    write_report_json(tmp_path / "r.json", rep)
    write_report_csv(tmp_path / "r.csv", rep)
    data = json.loads((tmp_path / "r.json").read_text())
    assert data["aggregate"]["AP"] == rep.aggregate["AP"]
    rows = (tmp_path / "r.csv").read_text().splitlines()
    assert rows[0].startswith("scene,ok,AP_0.2") and rows[-1].startswith("aggregate")


def test_manifest(tmp_path):
    f = tmp_path / "in.txt"
    f.write_text("x")
    m = RunManifest.create("cmd", {"a": 1}, [f], [tmp_path / "out"])
    m.write(manifest_path(tmp_path / "out"))
    data = json.loads((tmp_path / "out.manifest.json").read_text())
    assert data["config_hash"] == config_hash({"a": 1}) != config_hash({"a": 2})
    assert len(data["inputs"][str(f)]) == 64


def test_scene_config_roundtrip(tmp_path, rng):
    T = RigidTransform.random(rng, 0.1)
    cfg = {
        "meshes": {"box": {"primitive": "cuboid", "size": [0.04, 0.04, 0.02]}},
        "instances": [{"object": "box", "pose": T.row_major_12().tolist()}],
        "cameras": [look_at((0, -0.3, 0.5), (0, 0, 0)).row_major_12().tolist()],
    }
    path = tmp_path / "scene.json"
    path.write_text(json.dumps(cfg))
    scene = load_scene_config(path)
    assert np.allclose(scene.instances[0].pose.matrix(), T.matrix())
    again = scene_from_dict(json.loads(json.dumps(scene_to_dict(scene, cfg["meshes"]))))
    assert np.allclose(again.camera_poses[0].matrix(), scene.camera_poses[0].matrix())


@pytest.mark.parametrize("cfg", [
    {"meshes": {}, "instances": [{"object": "nope"}]},
    {"meshes": {"b": {"primitive": "cuboid", "size": [1, 1, 1]}}, "instances": []},
    {"meshes": {"b": {"primitive": "cuboid", "size": [1, 1, 1]}}, "instances": [{"object": "b", "pose": [1, 2]}]},
    {"meshes": {"b": {"what": 1}}, "instances": [{"object": "b"}]},
])
def test_scene_config_errors(cfg):
    with pytest.raises(SceneConfigError):
        scene_from_dict(cfg)


def test_scene_config_bad_json(tmp_path):
    path = tmp_path / "s.json"
    path.write_text("{\n  oops\n}")
    with pytest.raises(SceneConfigError, match=":2:"):
        load_scene_config(path)
