"""flowsplat: dense-flow SLAM core with a differentiable Gaussian splat renderer.

The package is organized as a numpy/scipy library:

  geometry        SE(3) algebra and the pinhole projection pair
  map_state       keyframe buffer, frame graph and snapshots
  providers       pluggable correspondence/depth/feature providers + synthetic scenes
  dba             dense bundle adjustment (weighted, calibrating, prior-regularized)
  loop_detect     place-feature database and loop candidate search
  splat           differentiable 3D Gaussian splatting (forward, backward, losses)
  density_control densification and pruning strategies
  pipeline        frontend/backend/renderer/loop workers and orchestration
  evalio          metrics, TUM dataset ingestion and export formats
"""

from .geometry import (PinholeIntrinsics, SE3Pose, heuristic_intrinsics, project,
                       reproject, rotation_angle_between, se3_exp, se3_log, unproject)

__all__ = [
    "SE3Pose",
    "PinholeIntrinsics",
    "se3_exp",
    "se3_log",
    "project",
    "unproject",
    "reproject",
    "rotation_angle_between",
    "heuristic_intrinsics",
]

__version__ = "0.1.0"
