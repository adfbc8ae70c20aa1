"""Lift a screen sketch onto its depth plane and re-project it as the camera
moves: the same path, expressed camera-invariantly.

Run: python demos/01_reprojection_basics.py
"""

import numpy as np

from worldtraj import Extrinsics, Intrinsics, UserTrajectory
from worldtraj.trajectory import lift_trajectory, normalize_trajectory, reproject

k = Intrinsics(fx=100, fy=100, cx=64, cy=64, width=128, height=128)
e0 = Extrinsics.identity()

# A user sketches a short diagonal stroke on the first frame.
pixels = [(t, np.array([40.0 + 6 * t, 64.0 + 2 * t])) for t in range(6)]
sketch = UserTrajectory(track_id="stroke", click=pixels[0][1], points=tuple(pixels))

print("normalized coordinates on the first-frame plane:")
for (t, px), q in zip(sketch.points, normalize_trajectory(sketch, k)):
    print(f"  t={t}  pixel=({px[0]:6.1f},{px[1]:6.1f})  q=({q[0]:+.3f},{q[1]:+.3f})")

world = lift_trajectory(sketch, k, depth=4.0, anchor_pose=e0)

print("\nstatic camera: re-projection reproduces the sketch exactly")
for p in reproject(world, k, e0):
    print(f"  t={p.t}  ({p.pixel[0]:7.3f},{p.pixel[1]:7.3f})  visible={p.visible}")

print("\ncamera shifted 0.5 units right: every point shifts by -fx*0.5/d = -12.5 px")
moved = Extrinsics(np.eye(3), np.array([-0.5, 0.0, 0.0]))
for p in reproject(world, k, moved):
    print(f"  t={p.t}  ({p.pixel[0]:7.3f},{p.pixel[1]:7.3f})")
