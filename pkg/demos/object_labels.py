"""Seal labels on single objects.

Scores every voxel-sampled candidate of a few primitives and shows how the
seal score reacts to flatness, curvature and edges.

    python demos/object_labels.py
"""
import numpy as np

from suctionbench.primitives import bumpy_plate, cuboid, cylinder, icosphere
from suctionbench.seal import CupModel, SealParams, SuctionPose, annotate_object, seal_score
from suctionbench.spatial import MeshIndex


def summarize(name, ann):
    s = ann.s_seal
    print(f"{name:<22} {len(s):5d} candidates  mean {s.mean():.3f}  "
          f">=0.9: {np.mean(s >= 0.9):6.1%}  zero: {np.mean(s == 0):6.1%}")


def main():
    print("-- seal score per object (5 mm voxels, 10 mm cup) --")
    summarize("plate 100x100x8 mm", annotate_object(cuboid((0.1, 0.1, 0.008))))
    summarize("bumpy plate", annotate_object(bumpy_plate((0.1, 0.1, 0.02), amplitude=0.003)))
    summarize("can r=35 mm", annotate_object(cylinder(0.035, 0.1)))
    for r in (0.16, 0.08, 0.04, 0.02):
        summarize(f"sphere r={r * 1000:.0f} mm", annotate_object(icosphere(r, 4)))

    print("\n-- one pose walking off the plate edge --")
    index = MeshIndex(cuboid((0.1, 0.1, 0.008)))
    for x in (0.0, 0.03, 0.039, 0.041, 0.045):
        res = seal_score(index, SuctionPose((x, 0.0, 0.004), (0, 0, 1)))
        print(f"x = {x * 1000:4.0f} mm  S_seal {res.score:.3f}  misses {int((~res.projection.hit_mask).sum())}")

    print("\n-- tilting the approach on a flat face --")
    for deg in (0, 10, 20, 30):
        a = np.radians(deg)
        res = seal_score(index, SuctionPose((0, 0, 0.004), (np.sin(a), 0, np.cos(a))))
        print(f"tilt {deg:2d} deg  deform {res.deform:.3f}  fit {res.fit:.3f}  S_seal {res.score:.3f}")

    print("\n-- binary deformation mode and a larger cup --")
    plate = cuboid((0.1, 0.1, 0.008))
    summarize("plate, binary springs", annotate_object(plate, params=SealParams(binary=True)))
    summarize("plate, 20 mm cup", annotate_object(plate, cup=CupModel(0.02)))


if __name__ == "__main__":
    main()
