"""End-to-end benchmark run on the two synthetic reference scenes.

For each scene: build dense labels, render a 640x480 depth image, run the
Normal STD baseline, and evaluate both the baseline and the ground-truth
top-50 suctions. Artifacts land in demos/out/<scene>/.

    python demos/scene_benchmark.py
"""
import os
import time

from suctionbench.baselines import combine_heatmaps, normal_std_baseline, render_label_heatmaps
from suctionbench.evaluation import EvalConfig, evaluate_scene, ground_truth_predictions
from suctionbench.fileio import write_depth_png, write_heatmap, write_predictions, write_scene_annotation
from suctionbench.scene import SceneGeometry, annotate_scene, synthetic_scene
from suctionbench.seal import annotate_object

OUT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "out")


def run(kind):
    t0 = time.perf_counter()
    out = os.path.join(OUT, kind)
    os.makedirs(out, exist_ok=True)
    scene = synthetic_scene(kind)
    geom = SceneGeometry(scene)
    cam = scene.camera_poses[0]

    anns = {oid: annotate_object(mesh, index=geom.mesh_index(oid)) for oid, mesh in scene.meshes.items()}
    labels = annotate_scene(scene, anns, geometry=geom)
    write_scene_annotation(os.path.join(out, "labels.txt"), labels)

    preds, heat, depth, _ = normal_std_baseline(scene, 0, geom)
    write_depth_png(os.path.join(out, "depth.png"), depth)
    write_heatmap(os.path.join(out, "normal_std.bin"), heat)
    write_predictions(os.path.join(out, "normal_std.txt"), preds)

    seal, center = render_label_heatmaps(labels, scene.intrinsics, cam, sigma=4.0, center_sigma=8.0, depth=depth)
    write_heatmap(os.path.join(out, "label_seal.bin"), seal)
    write_heatmap(os.path.join(out, "label_combined.bin"), combine_heatmaps(seal, center))

    cfg = EvalConfig()
    base = evaluate_scene(geom, preds, cfg, "normal-std")
    gt = evaluate_scene(geom, ground_truth_predictions(labels, geom, cfg), cfg, "ground-truth")
    free = labels.collision_free.mean()
    print(f"{kind}: {len(labels)} labels ({free:.0%} collision-free), mean S {labels.score.mean():.3f}")
    for rep in (gt, base):
        m = rep.metrics
        print(f"  {rep.name:<13} AP {m['AP']:.4f}  AP_0.2 {m['AP_0.2']:.4f}  AP_0.8 {m['AP_0.8']:.4f}  "
              f"AP-top1 {m['AP_top1']:.4f}  ({rep.counts['evaluated']} evaluated, "
              f"{rep.counts['suppressed']} suppressed)")
    print(f"  {time.perf_counter() - t0:.1f} s, artifacts in {out}")


if __name__ == "__main__":
    for kind in ("smooth", "bumpy"):
        run(kind)
