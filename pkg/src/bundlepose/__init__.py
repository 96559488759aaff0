"""Multi-view multi-object 6DoF bundle pose refinement and benchmarking."""

from .geometry import CameraIntrinsics, RigidPose

__version__ = "0.1.0"

__all__ = ["CameraIntrinsics", "RigidPose", "__version__"]
