import numpy as np
import pytest

from suctionbench.baselines import (
    SamplerConfig,
    combine_heatmaps,
    grid_sample,
    normal_std,
    normal_std_baseline,
    normal_std_heatmap,
    object_bbox,
    organized_normals,
    pixels_to_suctions,
    render_label_heatmaps,
)
from suctionbench.geometry import CameraIntrinsics, look_at
from suctionbench.scene import SceneAnnotation

INTR = CameraIntrinsics.default(64, 48)


def brute_grid(hm, cell):
    out = []
    H, W = hm.shape
    for cy in range(0, H, cell):
        for cx in range(0, W, cell):
            block = hm[cy:cy + cell, cx:cx + cell]
            v, u = np.unravel_index(np.argmax(block), block.shape)
            if block[v, u] > 0:
                out.append(((cx + u, cy + v), float(block[v, u])))
    return sorted(out, key=lambda r: -r[1])


def test_flat_depth_normals_face_camera():
    n, valid = organized_normals(np.full((48, 64), 0.5), INTR)
    assert valid[1:-1, 1:-1].all() and not valid[0].any()
    assert np.allclose(n[valid], [0, 0, -1])


def test_flat_patch_has_zero_std():
    sigma = normal_std(np.full((48, 64), 0.5), INTR, 3)
    assert np.nanmax(sigma) == 0.0


def test_heatmap_prefers_flat_region():
    v, u = np.mgrid[0:48, 0:64]
    depth = 0.5 + np.where(u >= 32, 0.004 * np.sin(u * 1.3) * np.sin(v * 1.1), 0.0)
    heat = normal_std_heatmap(depth, INTR, (0, 0, 64, 48), 3)
    assert heat[24, 10] == 1.0
    assert heat[24, 50] < heat[24, 10]
    assert heat.min() >= 0 and heat.max() <= 1
    boxed = normal_std_heatmap(depth, INTR, [(0, 0, 16, 16), (40, 30, 60, 40)], 3)
    assert boxed[20, 20] == 0.0 and boxed[5, 5] == 1.0


def test_heatmap_validation():
    d = np.full((48, 64), 0.5)
    with pytest.raises(ValueError):
        normal_std_heatmap(d, INTR, (10, 10, 5, 20))
    with pytest.raises(ValueError):
        normal_std_heatmap(d, INTR, (0, 0, 100, 10))
    with pytest.raises(ValueError):
        normal_std_heatmap(np.zeros((48, 64)), INTR, (0, 0, 10, 10))
    with pytest.raises(ValueError):
        normal_std_heatmap(d[:10], INTR, (0, 0, 10, 10))


def test_grid_sample_matches_brute_force(rng):
    hm = rng.uniform(-0.2, 1, size=(50, 70))
    hm[:16, :16] = 0
    got = grid_sample(hm, SamplerConfig(16, 1024))
    assert got == brute_grid(hm, 16)
    assert len(grid_sample(hm, SamplerConfig(16, 3))) == 3


def test_combine_heatmaps():
    assert np.array_equal(combine_heatmaps(np.full((2, 2), 0.5), np.eye(2)), 0.5 * np.eye(2))
    with pytest.raises(ValueError):
        combine_heatmaps(np.zeros((2, 2)), np.zeros((3, 2)))


def test_pixels_to_suctions_flat():
    depth = np.full((48, 64), 0.5)
    depth[0, 0] = 0
    preds, skipped = pixels_to_suctions([((10, 10), 0.9), ((0, 0), 0.8), ((30, 20), 0.7)], depth, INTR, k=10)
    assert skipped == 1 and len(preds) == 2
    assert np.allclose(preds.normals, [0, 0, -1])
    assert np.allclose(preds.points[:, 2], 0.5)
    pose = look_at((0, 0, 1), (0, 0, 0))
    world, _ = pixels_to_suctions([((32, 24), 1.0)], depth, INTR, k=10, camera_pose=pose)
    assert np.allclose(world.normals[0], [0, 0, 1])
    assert world.points[0, 2] == pytest.approx(0.5)


def test_label_heatmaps():
    pose = look_at((0, 0, 1), (0, 0, 0))
    ann = SceneAnnotation(np.array(["a", "a"], dtype=object), np.zeros(2, int), np.arange(2),
                          np.array([[0, 0, 0.0], [0.05, 0, 0]]), np.tile([0, 0, 1.0], (2, 1)),
                          np.array([0.8, 0.6]), np.ones(2), np.array([0.8, 0.6]), np.array([True, False]),
                          np.array([[0, 0, 0.0]]))
    seal, center = render_label_heatmaps(ann, INTR, pose, sigma=2.0, center_sigma=3.0)
    uv = np.unravel_index(np.argmax(seal), seal.shape)
    assert seal.max() == pytest.approx(0.8)
    assert center.max() == pytest.approx(1.0)
    assert uv == np.unravel_index(np.argmax(center), center.shape)
    kept, _ = render_label_heatmaps(ann, INTR, pose, sigma=2.0, drop_collisions=False)
    assert kept.sum() > seal.sum()


def test_baseline_pipeline(smooth_scene, smooth_geometry):
    preds, heat, depth, skipped = normal_std_baseline(smooth_scene, 0, smooth_geometry,
                                                      sampler=SamplerConfig(32, 50))
    assert heat.shape == (480, 640) and depth.shape == (480, 640)
    assert 0 < len(preds) <= 50
    assert np.all(np.diff(preds.confidence) <= 0)
    boxes = object_bbox(smooth_scene, smooth_scene.intrinsics, smooth_scene.camera_poses[0], per_object=True)
    assert len(boxes) == 5
    with pytest.raises(IndexError):
        normal_std_baseline(smooth_scene, 3, smooth_geometry)


def test_flat_heatmap_invariant_to_depth_offset():
    a = normal_std_heatmap(np.full((48, 64), 0.5), INTR, (10, 10, 50, 40), 3)
    b = normal_std_heatmap(np.full((48, 64), 0.9), INTR, (10, 10, 50, 40), 3)
    assert np.array_equal(a, b)
    assert np.all(a[11:39, 11:49] == 1.0)


def test_grid_sample_size_bound(rng):
    hm = rng.uniform(size=(40, 40)) * (rng.uniform(size=(40, 40)) > 0.97)
    cells = {(v // 8, u // 8) for v, u in zip(*np.nonzero(hm > 0))}
    for top_n in (1, 5, 100):
        assert len(grid_sample(hm, SamplerConfig(8, top_n))) <= min(top_n, len(cells))


def test_zero_sigma_splats_exact_pixels():
    pose = look_at((0, 0, 1), (0, 0, 0))
    pts = np.array([[0, 0, 0.0], [0.1, 0.05, 0]])
    ann = SceneAnnotation(np.array(["a", "a"], dtype=object), np.zeros(2, int), np.arange(2), pts,
                          np.tile([0, 0, 1.0], (2, 1)), np.array([0.7, 0.5]), np.ones(2), np.array([0.7, 0.5]),
                          np.ones(2, bool), np.zeros((1, 3)))
    seal, _ = render_label_heatmaps(ann, INTR, pose, sigma=0.0, center_sigma=0.0)
    assert np.count_nonzero(seal) == 2 and seal.max() == 0.7
