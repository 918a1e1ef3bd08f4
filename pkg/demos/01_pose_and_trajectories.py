"""Pose representation, quaternion algebra, and trajectory interpolation.

Run: python demos/01_pose_and_trajectories.py
"""

import math

import numpy as np

from pose2view import (
    Pose,
    interpolate_trajectory,
    matrix_to_quat,
    normalize_quaternion,
    pose_distance,
    quat_to_matrix,
    slerp,
)
from pose2view.pose import trajectory_request_to_json

# A pose is a translation (meters) plus a unit quaternion (w, x, y, z).
# Construction normalizes and canonicalizes the hemisphere automatically.
p = Pose(translation=[1.0, 0.5, -2.0], rotation=[-2.0, 0.0, 0.0, 0.0])
print("canonicalized rotation:", p.rotation)          # [1, 0, 0, 0]
print("flattened (x y z w qx qy qz):", p.flatten())

# Quaternions round-trip through rotation matrices.
q = normalize_quaternion([1.0, 0.0, 0.0, 1.0])        # 90 degrees about z
R = quat_to_matrix(q)
print("\n90-degree-z matrix:\n", np.round(R, 6))
print("back to quaternion:", matrix_to_quat(R))

# The pose pseudometric adds Euclidean translation distance and a weighted
# geodesic rotation angle: d = |t1 - t2| + alpha * theta.
a = Pose(translation=[0, 0, 0], rotation=[1, 0, 0, 0])
b = Pose(translation=[3, 4, 0], rotation=q)
print("\ndistance (alpha=1):", pose_distance(a, b, alpha=1.0))
print("translation only (alpha=0):", pose_distance(a, b, alpha=0.0))

# Slerp walks the shorter great-circle arc at constant angular speed.
mid = slerp([1, 0, 0, 0], q, 0.5)
print("\nhalfway to 90deg-z:", mid, "(= 45 degrees about z)")
print("angle check:", round(2 * math.degrees(math.acos(mid[0])), 3), "degrees")

# Keyposes interpolate into a dense trajectory: linear translations,
# slerp rotations, (n-1) * frames_per_segment + 1 frames total.
keyposes = [
    Pose(translation=[0, 0.6, 4.0], rotation=[1, 0, 0, 0]),
    Pose(translation=[2, 0.6, 3.0], rotation=q),
    Pose(translation=[3, 0.6, 0.0], rotation=[0.5, 0.5, 0.5, 0.5]),
]
traj = interpolate_trajectory(keyposes, frames_per_segment=4)
print(f"\n{len(keyposes)} keyposes -> {traj.frame_count} frames")
print("frame 2 translation:", traj.poses[2].translation)

# The same keyposes serialize to the trajectory JSON consumed by the CLI
# `trajectory` verb, the HTTP service, and the browser viewer.
print("\ntrajectory JSON:")
print(trajectory_request_to_json(keyposes, 4))
