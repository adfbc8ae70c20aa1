"""worldtraj: camera-invariant object trajectory control with an exact
synthetic world model, evaluation toolchain, curation pipeline, adapter
analysis, and an interactive session service."""

from .geometry import (
    CameraPose,
    DegenerateGeometryError,
    Extrinsics,
    GeometryError,
    Intrinsics,
    Sim3,
    back_project,
    fov_similarity,
    lift,
    project,
    relative_pose,
    umeyama_sim3,
)
from .rollout import MemoryBank, RolloutConfig, RolloutSession, run_rollout
from .trajectory import (
    AnchoredTrack,
    UserTrajectory,
    WorldTrajectory,
    anchor_depth,
    build_conditioning,
    normalize_trajectory,
    refine_anchor,
    reproject,
    reproject_track,
    screen_observe,
)
from .worldsim import SceneObject, SyntheticScene, depth_oracle, ground_truth_track, render

__version__ = "0.1.0"

__all__ = [
    "AnchoredTrack",
    "CameraPose",
    "DegenerateGeometryError",
    "Extrinsics",
    "GeometryError",
    "Intrinsics",
    "MemoryBank",
    "RolloutConfig",
    "RolloutSession",
    "SceneObject",
    "Sim3",
    "SyntheticScene",
    "UserTrajectory",
    "WorldTrajectory",
    "anchor_depth",
    "back_project",
    "build_conditioning",
    "depth_oracle",
    "fov_similarity",
    "ground_truth_track",
    "lift",
    "normalize_trajectory",
    "project",
    "refine_anchor",
    "relative_pose",
    "render",
    "reproject",
    "reproject_track",
    "run_rollout",
    "screen_observe",
    "umeyama_sim3",
]
