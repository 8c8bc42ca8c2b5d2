import json
import os

import numpy as np
import pytest

from suctionbench.cli import main
from suctionbench.config import ConfigError, ToolkitConfig, default_config_text, load_config
from suctionbench.fileio import read_depth, read_heatmap, read_scene_annotation
from suctionbench.geometry import look_at
from suctionbench.mesh import save_mesh
from suctionbench.primitives import cuboid


@pytest.fixture
def scene_file(tmp_path):
    save_mesh(cuboid((0.06, 0.06, 0.03)), tmp_path / "box.obj")
    cfg = {
        "meshes": {"box": "box.obj", "ball": {"primitive": "sphere", "radius": 0.03, "subdivisions": 3}},
        "instances": [
            {"object": "box", "pose": [1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0.015]},
            {"object": "ball", "pose": [1, 0, 0, 0.1, 0, 1, 0, 0, 0, 0, 1, 0.03]},
        ],
        "cameras": [look_at((0.05, -0.2, 0.4), (0.05, 0, 0)).row_major_12().tolist()],
        "intrinsics": {"fx": 160.0, "fy": 160.0, "cx": 79.5, "cy": 59.5, "width": 160, "height": 120},
    }
    path = tmp_path / "scene.json"
    path.write_text(json.dumps(cfg))
    return path


def test_defaults_convert_units():
    cfg = ToolkitConfig.from_dict({})
    assert cfg.cup.radius == pytest.approx(0.01)
    assert cfg.seal.c == pytest.approx(5e5)
    assert cfg.voxel == pytest.approx(0.005)
    assert cfg.evaluation.nms_radius == pytest.approx(0.02)
    assert json.loads(default_config_text())["cup"]["radius_mm"] == 10.0


@pytest.mark.parametrize("override", [{"bogus": 1}, {"cup": 3}, {"cup": {"radius_mm": -1}},
                                      {"evaluation": {"top_k": 0}}])
def test_config_errors(override):
    with pytest.raises(ConfigError):
        ToolkitConfig.from_dict(override)


def test_load_config_file(tmp_path):
    p = tmp_path / "c.json"
    p.write_text('{"cup": {"radius_mm": 15}}')
    assert load_config(p).cup.radius == pytest.approx(0.015)
    p.write_text("[1]")
    with pytest.raises(ConfigError):
        load_config(p)
    with pytest.raises(FileNotFoundError):
        load_config(tmp_path / "none.json")


def test_config_init(tmp_path, capsys):
    assert main(["config", "init"]) == 0
    assert json.loads(capsys.readouterr().out) == json.loads(default_config_text())
    assert main(["config", "init", "-o", str(tmp_path / "c.json")]) == 0
    assert load_config(tmp_path / "c.json").cup.n_vertices == 8


def test_full_cli_workflow(tmp_path, scene_file):
    out = tmp_path / "out"
    mesh = tmp_path / "box.obj"
    assert main(["annotate-object", str(mesh), "--scale", "1", "-o", str(out / "ann" / "box.txt")]) == 0
    assert os.path.exists(out / "ann" / "box.txt.manifest.json")
    assert main(["annotate-scene", str(scene_file), "-o", str(out / "scene.txt")]) == 0
    ann = read_scene_annotation(out / "scene.txt")
    assert np.allclose(ann.score, ann.s_seal * ann.s_wrench)

    assert main(["render-depth", str(scene_file), "-o", str(out / "depth.bin"), "--png", str(out / "d.png")]) == 0
    depth = read_depth(out / "depth.bin")
    assert depth.shape == (120, 160) and (depth > 0).all()

    assert main(["render-labels", str(scene_file), "--scene-annotation", str(out / "scene.txt"),
                 "-o", str(out / "labels")]) == 0
    assert read_heatmap(str(out / "labels") + "_seal.bin").max() > 0

    assert main(["baseline-normal-std", str(scene_file), "-o", str(out / "pred.txt"),
                 "--heatmap", str(out / "heat.bin")]) == 0
    assert "# frame: camera 0" in (out / "pred.txt").read_text()
    assert main(["sample-from-heatmap", str(out / "heat.bin"), "--depth", str(out / "depth.bin"),
                 "--scene", str(scene_file), "-o", str(out / "pred2.txt")]) == 0
    assert main(["evaluate", "--scene", str(scene_file), "--predictions", str(out / "pred.txt"),
                 str(out / "pred2.txt"), "-o", str(out / "report")]) == 0
    report = json.loads((out / "report" / "report.json").read_text())
    assert len(report["scenes"]) == 2 and all(s["ok"] for s in report["scenes"])
    # the second route reads float32 files back, so scores agree only closely
    a, b = (r["metrics"] for r in report["scenes"])
    assert abs(a["AP"] - b["AP"]) < 0.02 and a["AP_top1"] == b["AP_top1"]


def test_exit_codes(tmp_path, scene_file, capsys):
    assert main(["annotate-object", str(tmp_path / "missing.obj"), "-o", str(tmp_path / "x.txt")]) == 1
    assert "mesh file not found" in capsys.readouterr().err
    bad = tmp_path / "bad.obj"
    bad.write_text("v 0 0 0\nf 1 2 3 4\n")
    assert main(["annotate-object", str(bad), "-o", str(tmp_path / "x.txt")]) == 1
    assert "bad.obj:2" in capsys.readouterr().err
    assert main(["render-depth", str(scene_file), "--camera", "4", "-o", str(tmp_path / "d.bin")]) == 1
    cfg = tmp_path / "c.json"
    cfg.write_text('{"nope": 1}')
    assert main(["render-depth", str(scene_file), "--config", str(cfg), "-o", str(tmp_path / "d.bin")]) == 1
    # a malformed prediction file is reported per scene, not fatal
    pred = tmp_path / "p.txt"
    pred.write_text("garbage\n")
    assert main(["evaluate", "--scene", str(scene_file), "--predictions", str(pred), "-o", str(tmp_path / "r")]) == 0
    assert "FAILED" in capsys.readouterr().out


def test_annotate_object_rerun_is_byte_identical(tmp_path):
    save_mesh(cuboid((0.05, 0.04, 0.02)), tmp_path / "m.obj")
    assert main(["annotate-object", str(tmp_path / "m.obj"), "-o", str(tmp_path / "a.txt")]) == 0
    first = (tmp_path / "a.txt").read_bytes()
    assert main(["annotate-object", str(tmp_path / "m.obj"), "-o", str(tmp_path / "a.txt")]) == 0
    assert (tmp_path / "a.txt").read_bytes() == first


def test_empty_scene_config_errors(tmp_path, capsys):
    path = tmp_path / "s.json"
    path.write_text('{"meshes": {}, "instances": []}')
    assert main(["annotate-scene", str(path), "-o", str(tmp_path / "o.txt")]) == 1
    assert "no object instances" in capsys.readouterr().err
