"""Image-space baselines and label heatmaps.

Heatmaps are (H, W) float arrays in [0, 1] aligned with a CameraIntrinsics.
Pixel coordinates are (u, v) = (column, row).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter
from scipy.spatial import cKDTree

from .evaluation import Predictions
from .geometry import CameraIntrinsics, RigidTransform, _plane_normals, depth_to_points, orient_towards, project
from .scene import SceneAnnotation


@dataclass(frozen=True)
class SamplerConfig:
    cell: int = 16
    top_n: int = 1024

    def __post_init__(self):
        if self.cell < 1 or self.top_n < 1:
            raise ValueError("cell size and top_n must be positive")


def _check_bbox(bbox, intr: CameraIntrinsics):
    u0, v0, u1, v1 = (int(b) for b in bbox)
    if u1 <= u0 or v1 <= v0:
        raise ValueError(f"empty bounding box {bbox}")
    if u0 < 0 or v0 < 0 or u1 > intr.width or v1 > intr.height:
        raise ValueError(f"bounding box {bbox} leaves the {intr.width}x{intr.height} image")
    return u0, v0, u1, v1


def organized_normals(depth, intr: CameraIntrinsics):
    """Central-difference normals of the back-projected depth image, facing the camera.

    Returns (normals (H, W, 3), valid (H, W)); pixels on the border or next
    to invalid depth are invalid.
    """
    P = depth_to_points(depth, intr)
    du = np.full_like(P, np.nan)
    dv = np.full_like(P, np.nan)
    du[:, 1:-1] = P[:, 2:] - P[:, :-2]
    dv[1:-1, :] = P[2:, :] - P[:-2, :]
    n = np.cross(du, dv)
    length = np.linalg.norm(n, axis=-1)
    valid = np.isfinite(length) & (length > 0)
    n = np.where(valid[..., None], n / np.where(valid, length, 1.0)[..., None], 0.0)
    # camera sits at the origin; flip normals to face it
    flip = np.einsum("hwc,hwc->hw", n, np.nan_to_num(P)) > 0
    n[flip] *= -1
    return n, valid


def normal_std(depth, intr: CameraIntrinsics, patch_radius: int = 5):
    """Pooled standard deviation of normal components over a square patch (NaN where no data)."""
    n, valid = organized_normals(depth, intr)
    size = 2 * patch_radius + 1
    w = valid.astype(np.float64)
    count = uniform_filter(w, size, mode="constant")
    var_sum = np.zeros_like(count)
    with np.errstate(invalid="ignore", divide="ignore"):
        for c in range(3):
            m1 = uniform_filter(n[..., c] * w, size, mode="constant") / count
            m2 = uniform_filter(n[..., c] ** 2 * w, size, mode="constant") / count
            var_sum += m2 - m1 ** 2
        sigma = np.sqrt(np.maximum(var_sum / 3.0, 0.0))
    # round-off on perfectly flat patches
    sigma[sigma < 1e-6] = 0.0
    sigma[~(valid & (count > 0))] = np.nan
    return sigma


def _box_mask(bbox, intr: CameraIntrinsics):
    boxes = [bbox] if np.ndim(bbox) == 1 else list(bbox)
    if not boxes:
        raise ValueError("no bounding box given")
    mask = np.zeros((intr.height, intr.width), dtype=bool)
    for b in boxes:
        u0, v0, u1, v1 = _check_bbox(b, intr)
        mask[v0:v1, u0:u1] = True
    return mask


def normal_std_heatmap(depth, intr: CameraIntrinsics, bbox, patch_radius: int = 5):
    """Score 1 - sigma / max(sigma) inside the box(es), 0 elsewhere.

    `bbox` is (u0, v0, u1, v1) with exclusive ends, or a list of such boxes.
    sigma is normalized by its maximum over the whole image.
    """
    depth = np.asarray(depth, dtype=np.float64)
    if depth.shape != (intr.height, intr.width):
        raise ValueError(f"depth shape {depth.shape} does not match {intr.width}x{intr.height} intrinsics")
    mask = _box_mask(bbox, intr)
    if not (depth[mask] > 0).any():
        raise ValueError("no valid depth inside the bounding box")
    sigma = normal_std(depth, intr, patch_radius)
    top = np.nanmax(sigma) if np.isfinite(sigma).any() else 0.0
    scaled = sigma / top if top > 0 else np.where(np.isfinite(sigma), 0.0, np.nan)
    score = np.where(mask & np.isfinite(scaled), 1.0 - np.nan_to_num(scaled), 0.0)
    return np.clip(score, 0.0, 1.0)


def combine_heatmaps(seal, center):
    seal = np.asarray(seal, dtype=np.float64)
    center = np.asarray(center, dtype=np.float64)
    if seal.shape != center.shape:
        raise ValueError(f"heatmap shapes differ: {seal.shape} vs {center.shape}")
    return seal * center


def grid_sample(heatmap, config: SamplerConfig = SamplerConfig()):
    """Best pixel of every grid cell, ranked by score.

    Returns a list of ((u, v), score). Cells whose best score is <= 0 are
    dropped; ties inside a cell go to the lowest row-major pixel, ties
    between cells to the earlier cell in row-major order.
    """
    hm = np.asarray(heatmap, dtype=np.float64)
    H, W = hm.shape
    c = config.cell
    nby, nbx = -(-H // c), -(-W // c)
    pad = np.full((nby * c, nbx * c), -np.inf)
    pad[:H, :W] = np.where(np.isfinite(hm), hm, -np.inf)
    cells = pad.reshape(nby, c, nbx, c).transpose(0, 2, 1, 3).reshape(nby * nbx, c * c)
    arg = np.argmax(cells, axis=1)
    best = cells[np.arange(len(cells)), arg]
    cy, cx = np.divmod(np.arange(nby * nbx), nbx)
    v = cy * c + arg // c
    u = cx * c + arg % c
    keep = np.flatnonzero(best > 0)
    order = keep[np.argsort(-best[keep], kind="stable")][: config.top_n]
    return [((int(u[i]), int(v[i])), float(best[i])) for i in order]


def pixels_to_suctions(samples, depth, intr: CameraIntrinsics, cloud=None, k: int = 30,
                       camera_pose: RigidTransform | None = None):
    """Turn (pixel, score) samples into suction predictions.

    Points are back-projected; directions are k-nearest-neighbour plane
    normals of the depth cloud (or `cloud`, camera frame) facing the camera.
    Output is in the camera frame unless `camera_pose` is given.
    Returns (Predictions, number of skipped samples).
    """
    depth = np.asarray(depth, dtype=np.float64)
    if cloud is None:
        P = depth_to_points(depth, intr).reshape(-1, 3)
        cloud = P[np.isfinite(P[:, 0])]
    cloud = np.asarray(cloud, dtype=np.float64).reshape(-1, 3)
    pts, conf = [], []
    skipped = 0
    for (u, v), s in samples:
        d = depth[v, u] if 0 <= v < depth.shape[0] and 0 <= u < depth.shape[1] else 0.0
        if not d > 0:
            skipped += 1
            continue
        pts.append(((u - intr.cx) * d / intr.fx, (v - intr.cy) * d / intr.fy, d))
        conf.append(s)
    if not pts:
        return Predictions.empty(), skipped
    pts = np.array(pts)
    kk = min(k, len(cloud))
    if kk < 3:
        return Predictions.empty(), skipped + len(pts)
    _, idx = cKDTree(cloud).query(pts, k=kk)
    normals, ok = _plane_normals(cloud[idx.reshape(len(pts), kk)])
    normals = orient_towards(normals, pts, np.zeros(3))
    skipped += int(np.sum(~ok))
    preds = Predictions(pts[ok], normals[ok], np.array(conf)[ok])
    if camera_pose is not None:
        preds = preds.transformed(camera_pose)
    return preds, skipped


def _splat(img, u, v, amp, sigma):
    H, W = img.shape
    if sigma <= 0:
        img[v, u] = max(img[v, u], amp)
        return
    r = int(np.ceil(3 * sigma))
    u0, u1 = max(u - r, 0), min(u + r, W - 1)
    v0, v1 = max(v - r, 0), min(v + r, H - 1)
    yy, xx = np.mgrid[v0:v1 + 1, u0:u1 + 1]
    g = amp * np.exp(-((xx - u) ** 2 + (yy - v) ** 2) / (2 * sigma ** 2))
    np.maximum(img[v0:v1 + 1, u0:u1 + 1], g, out=img[v0:v1 + 1, u0:u1 + 1])


def _to_pixels(points_world, intr, camera_pose, depth=None, occlusion_tol=0.005):
    cam = camera_pose.inverse().apply(np.asarray(points_world, dtype=np.float64).reshape(-1, 3))
    front = cam[:, 2] > 1e-9
    uv = np.full((len(cam), 2), -1, dtype=np.int64)
    with np.errstate(divide="ignore", invalid="ignore"):
        raw = project(intr, cam)
    uv[front] = np.rint(raw[front]).astype(np.int64)
    inside = front & (uv[:, 0] >= 0) & (uv[:, 0] < intr.width) & (uv[:, 1] >= 0) & (uv[:, 1] < intr.height)
    if depth is not None:
        d = np.asarray(depth)
        seen = np.zeros(len(cam), dtype=bool)
        ii = np.flatnonzero(inside)
        dd = d[uv[ii, 1], uv[ii, 0]]
        seen[ii] = (dd > 0) & (cam[ii, 2] <= dd + occlusion_tol)
        inside &= seen
    return uv, inside


def render_label_heatmaps(annotation: SceneAnnotation, intr: CameraIntrinsics, camera_pose: RigidTransform,
                          sigma: float = 4.0, center_sigma: float | None = None, depth=None,
                          drop_collisions: bool = True):
    """Seal and center label heatmaps for one camera.

    Each visible annotated point splats a Gaussian of amplitude S_seal
    (0 for colliding points when drop_collisions); each object's center of
    mass splats amplitude 1 into the center map. Splats combine by maximum.
    With `depth`, points hidden behind nearer surfaces are skipped.
    """
    if len(annotation) == 0:
        raise ValueError("annotation is empty")
    H, W = intr.height, intr.width
    seal = np.zeros((H, W))
    center = np.zeros((H, W))
    amp = np.where(annotation.collision_free | (not drop_collisions), annotation.s_seal, 0.0)
    uv, ok = _to_pixels(annotation.points, intr, camera_pose, depth)
    for i in np.flatnonzero(ok):
        _splat(seal, int(uv[i, 0]), int(uv[i, 1]), float(amp[i]), sigma)
    cs = sigma if center_sigma is None else center_sigma
    cuv, cok = _to_pixels(annotation.object_centers, intr, camera_pose)
    for i in np.flatnonzero(cok):
        _splat(center, int(cuv[i, 0]), int(cuv[i, 1]), 1.0, cs)
    return seal, center


def object_bbox(scene, intr: CameraIntrinsics, camera_pose: RigidTransform, margin: int = 0, per_object=False):
    """Pixel box (u0, v0, u1, v1), end-exclusive, around projected object vertices.

    With per_object, returns one box per visible instance instead of their union.
    """
    inv = camera_pose.inverse()
    boxes = []
    for inst in scene.instances:
        pts = inv.apply(inst.pose.apply(scene.meshes[inst.object_id].vertices))
        pts = pts[pts[:, 2] > 1e-9]
        if not len(pts):
            continue
        uv = project(intr, pts)
        u0, v0 = np.floor(uv.min(axis=0)).astype(int) - margin
        u1, v1 = np.ceil(uv.max(axis=0)).astype(int) + 1 + margin
        box = (max(u0, 0), max(v0, 0), min(u1, intr.width), min(v1, intr.height))
        if box[2] > box[0] and box[3] > box[1]:
            boxes.append(tuple(int(b) for b in box))
    if not boxes:
        raise ValueError("no object is in front of the camera")
    if per_object:
        return boxes
    b = np.array(boxes)
    return int(b[:, 0].min()), int(b[:, 1].min()), int(b[:, 2].max()), int(b[:, 3].max())


def normal_std_baseline(scene, camera: int = 0, geometry=None, patch_radius: int = 5,
                        sampler: SamplerConfig = SamplerConfig(), k: int = 30, bbox=None):
    """Render, score with Normal STD, sample and lift to world-frame predictions.

    Returns (predictions, heatmap, depth, skipped).
    """
    from .scene import render_depth

    intr = scene.intrinsics or CameraIntrinsics.default()
    if not 0 <= camera < len(scene.camera_poses):
        raise IndexError(f"camera {camera} is not defined in the scene")
    pose = scene.camera_poses[camera]
    depth = render_depth(scene, intr, pose, geometry)
    box = bbox if bbox is not None else object_bbox(scene, intr, pose, per_object=True)
    heat = normal_std_heatmap(depth, intr, box, patch_radius)
    samples = grid_sample(heat, sampler)
    preds, skipped = pixels_to_suctions(samples, depth, intr, k=k, camera_pose=pose)
    return preds, heat, depth, skipped
