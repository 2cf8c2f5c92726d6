"""Workspace limits of the desk hexapod and camera calibration.

Sweeps each axis until a leg runs out of stroke or a yoke closes up, then
calibrates a synthetic camera from tracked board poses.
"""

import math

import numpy as np

from hexid import handeye as HE
from hexid import joints as J
from hexid import kinematics as K

geom = K.default_geometry()
table = J.default_table(0.5)
for dof, name in enumerate(K.AXIS_LABELS):
    rot = dof >= 3
    r = K.sweep_range_of_motion(geom, dof, step=math.radians(0.5) if rot else 0.002, table=table)
    unit, k = ("deg", math.degrees(1)) if rot else ("m", 1.0)
    print(f"{name:>2}: {k * r.min:+8.3f} ({r.min_bound}) .. {k * r.max:+8.3f} ({r.max_bound}) {unit}")

rng = np.random.default_rng(1)
X = HE.RigidTransform.from_pose([0.5, -0.2, 0.25, 0.0, 0.3, 2.8])
Z = HE.RigidTransform.from_pose([0.05, -0.03, 0.02, 0.1, -0.05, 0.4])
poses = rng.uniform(-1, 1, (25, 6)) * [0.1, 0.1, 0.08, 0.3, 0.3, 0.5]
poses[:, 2] += geom.home_height
ds = HE.synthesize_tracking_data(X, Z, poses, math.radians(0.1), 1e-4, rng)
Xe, Ze = HE.calibrate(ds)
print(f"camera frame: {math.degrees(HE.rotation_error(X.rotation, Xe.rotation)):.3f} deg, "
      f"{1e3 * np.linalg.norm(X.translation - Xe.translation):.2f} mm")
