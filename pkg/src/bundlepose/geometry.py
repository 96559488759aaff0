"""SE(3) pose algebra, pinhole projection, and the analytic derivatives.

Conventions used throughout the package:

* a pose maps points from its source frame into its target frame as
  ``x' = R x + t``;
* tangent vectors are 6-vectors ``(wx, wy, wz, vx, vy, vz)`` with the
  rotation part first (radians) and translation second (meters);
* perturbations are applied by left multiplication, ``P <- exp(d) * P``,
  so camera and object pose Jacobians share one formula.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import NonPositiveDepth

MIN_DEPTH = 1e-9


def skew(v: np.ndarray) -> np.ndarray:
    """Cross-product matrix of a 3-vector."""
    return np.array(
        [
            [0.0, -v[2], v[1]],
            [v[2], 0.0, -v[0]],
            [-v[1], v[0], 0.0],
        ]
    )


def _check_rotation(R: np.ndarray) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        raise ValueError(f"rotation must be 3x3, got {R.shape}")
    if not np.allclose(R.T @ R, np.eye(3), atol=1e-6):
        raise ValueError("rotation is not orthonormal")
    if np.linalg.det(R) < 0.0:
        raise ValueError("rotation has negative determinant")
    return R


@dataclass(frozen=True)
class RigidPose:
    """An SE(3) element: 3x3 rotation plus translation in meters."""

    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        R = _check_rotation(self.R)
        t = np.asarray(self.t, dtype=float).reshape(3)
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)

    @staticmethod
    def identity() -> "RigidPose":
        return RigidPose(np.eye(3), np.zeros(3))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform one (3,) point or an (N, 3) batch."""
        pts = np.asarray(points, dtype=float)
        return pts @ self.R.T + self.t

    def inverse(self) -> "RigidPose":
        return RigidPose(self.R.T, -self.R.T @ self.t)

    def compose(self, other: "RigidPose") -> "RigidPose":
        """self applied after other: (self*other)(x) = self(other(x))."""
        return RigidPose(self.R @ other.R, self.R @ other.t + self.t)

    def __matmul__(self, other: "RigidPose") -> "RigidPose":
        return self.compose(other)

    def orthonormalized(self) -> "RigidPose":
        """Snap the rotation back onto SO(3) via polar decomposition."""
        U, _, Vt = np.linalg.svd(self.R)
        R = U @ Vt
        if np.linalg.det(R) < 0:
            R = U @ np.diag([1.0, 1.0, -1.0]) @ Vt
        return RigidPose(R, self.t)

    def almost_equal(self, other: "RigidPose", tol: float = 1e-9) -> bool:
        return bool(
            np.allclose(self.R, other.R, atol=tol)
            and np.allclose(self.t, other.t, atol=tol)
        )

    def to_json_dict(self) -> dict:
        return {"R": [float(x) for x in self.R.reshape(-1)], "t": [float(x) for x in self.t]}

    @staticmethod
    def from_json_dict(d: dict) -> "RigidPose":
        R = np.asarray(d["R"], dtype=float).reshape(3, 3)
        return RigidPose(R, np.asarray(d["t"], dtype=float))

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())

    @staticmethod
    def from_json(s: str) -> "RigidPose":
        return RigidPose.from_json_dict(json.loads(s))


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole parameters; focal lengths and principal point in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    def to_json_dict(self) -> dict:
        return {
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "width": self.width,
            "height": self.height,
        }

    @staticmethod
    def from_json_dict(d: dict) -> "CameraIntrinsics":
        return CameraIntrinsics(
            fx=float(d["fx"]),
            fy=float(d["fy"]),
            cx=float(d["cx"]),
            cy=float(d["cy"]),
            width=int(d["width"]),
            height=int(d["height"]),
        )


def compose(a: RigidPose, b: RigidPose) -> RigidPose:
    return a.compose(b)


def inverse(p: RigidPose) -> RigidPose:
    return p.inverse()


def _so3_exp(w: np.ndarray) -> np.ndarray:
    theta = float(np.linalg.norm(w))
    W = skew(w)
    if theta < 1e-8:
        # second-order Taylor keeps the round trip tight near zero
        return np.eye(3) + W + 0.5 * (W @ W)
    return (
        np.eye(3)
        + (np.sin(theta) / theta) * W
        + ((1.0 - np.cos(theta)) / theta**2) * (W @ W)
    )


def _so3_log(R: np.ndarray) -> np.ndarray:
    cos_theta = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    theta = float(np.arccos(cos_theta))
    vee = 0.5 * np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if theta < 1e-8:
        return vee
    if theta < np.pi - 1e-6:
        return theta / np.sin(theta) * vee
    # Close to pi the off-diagonal difference vanishes; recover the axis
    # from the symmetric part and take the principal branch for the sign.
    S = 0.5 * (R + np.eye(3))
    axis = np.sqrt(np.maximum(np.diag(S), 0.0))
    k = int(np.argmax(axis))
    axis = S[:, k] / max(axis[k], 1e-12)
    axis = axis / np.linalg.norm(axis)
    for i in range(3):
        if abs(axis[i]) > 1e-6:
            if axis[i] < 0:
                axis = -axis
            break
    return theta * axis


def _left_jacobian(w: np.ndarray) -> np.ndarray:
    theta = float(np.linalg.norm(w))
    W = skew(w)
    if theta < 1e-6:
        return np.eye(3) + 0.5 * W + (W @ W) / 6.0
    return (
        np.eye(3)
        + ((1.0 - np.cos(theta)) / theta**2) * W
        + ((theta - np.sin(theta)) / theta**3) * (W @ W)
    )


def _left_jacobian_inv(w: np.ndarray) -> np.ndarray:
    theta = float(np.linalg.norm(w))
    W = skew(w)
    if theta < 1e-6:
        return np.eye(3) - 0.5 * W + (W @ W) / 12.0
    coef = (1.0 / theta**2) * (1.0 - (theta * np.sin(theta)) / (2.0 * (1.0 - np.cos(theta))))
    return np.eye(3) - 0.5 * W + coef * (W @ W)


def exp(delta: np.ndarray) -> RigidPose:
    """Exponential map from a (wx,wy,wz,vx,vy,vz) tangent to a pose."""
    delta = np.asarray(delta, dtype=float).reshape(6)
    w, v = delta[:3], delta[3:]
    return RigidPose(_so3_exp(w), _left_jacobian(w) @ v)


def log(pose: RigidPose) -> np.ndarray:
    """Principal-branch inverse of :func:`exp` (rotation angle <= pi)."""
    w = _so3_log(pose.R)
    v = _left_jacobian_inv(w) @ pose.t
    return np.concatenate([w, v])


def interpolate_pose(a: RigidPose, b: RigidPose, s: float) -> RigidPose:
    """Geodesic between two poses; s=0 gives a, s=1 gives b."""
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"interpolation parameter must be in [0,1], got {s}")
    if s == 0.0:
        return a
    return a.compose(exp(s * log(a.inverse().compose(b))))


def project(pose: RigidPose, K: CameraIntrinsics, points: np.ndarray) -> np.ndarray:
    """Project model/world points through a pose into pixel coordinates.

    Raises NonPositiveDepth if any transformed point has Z <= 1e-9 m.
    """
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    cam = pose.apply(pts.reshape(-1, 3))
    z = cam[:, 2]
    if np.any(z <= MIN_DEPTH):
        raise NonPositiveDepth(f"point depth {z.min():.3g} m is not positive")
    uv = np.empty((cam.shape[0], 2))
    uv[:, 0] = K.fx * cam[:, 0] / z + K.cx
    uv[:, 1] = K.fy * cam[:, 1] / z + K.cy
    return uv[0] if single else uv


def project_valid(
    pose: RigidPose, K: CameraIntrinsics, points: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Batched projection that flags bad depths instead of raising.

    Returns (uv, z, valid); uv rows with valid=False are filled with zeros.
    """
    cam = pose.apply(np.asarray(points, dtype=float).reshape(-1, 3))
    z = cam[:, 2]
    valid = z > MIN_DEPTH
    uv = np.zeros((cam.shape[0], 2))
    zs = np.where(valid, z, 1.0)
    uv[:, 0] = np.where(valid, K.fx * cam[:, 0] / zs + K.cx, 0.0)
    uv[:, 1] = np.where(valid, K.fy * cam[:, 1] / zs + K.cy, 0.0)
    return uv, z, valid


def unproject(
    pose_cam: RigidPose, K: CameraIntrinsics, xy: np.ndarray, depth: np.ndarray | float
) -> np.ndarray:
    """Lift pixels with known camera-frame depth back to the world frame.

    ``pose_cam`` is the world-to-camera pose; the result projects back to
    ``xy`` exactly and sits at camera-frame Z equal to ``depth``.
    """
    xy_arr = np.asarray(xy, dtype=float)
    single = xy_arr.ndim == 1
    xy2 = xy_arr.reshape(-1, 2)
    d = np.broadcast_to(np.asarray(depth, dtype=float), (xy2.shape[0],))
    if np.any(d <= 0):
        raise NonPositiveDepth("unprojection depth must be positive")
    cam = np.empty((xy2.shape[0], 3))
    cam[:, 0] = (xy2[:, 0] - K.cx) * d / K.fx
    cam[:, 1] = (xy2[:, 1] - K.cy) * d / K.fy
    cam[:, 2] = d
    world = pose_cam.inverse().apply(cam)
    return world[0] if single else world


def _pinhole_jacobian(cam_pts: np.ndarray, K: CameraIntrinsics) -> np.ndarray:
    """d(uv)/d(camera point), shape (N, 2, 3)."""
    x, y, z = cam_pts[:, 0], cam_pts[:, 1], cam_pts[:, 2]
    J = np.zeros((cam_pts.shape[0], 2, 3))
    J[:, 0, 0] = K.fx / z
    J[:, 0, 2] = -K.fx * x / z**2
    J[:, 1, 1] = K.fy / z
    J[:, 1, 2] = -K.fy * y / z**2
    return J


def projection_jacobian(
    pose_cam: RigidPose,
    pose_model: RigidPose,
    K: CameraIntrinsics,
    points: np.ndarray,
) -> np.ndarray:
    """Derivative of pi(Pc * Pm * X) w.r.t. left-applied camera and model
    tangents, stacked as a (2, 12) matrix (or (N, 2, 12) for batches):
    columns 0:6 are the camera tangent, columns 6:12 the model tangent.
    """
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    X = pts.reshape(-1, 3)
    world = pose_model.apply(X)
    cam = pose_cam.apply(world)
    z = cam[:, 2]
    if np.any(z <= MIN_DEPTH):
        raise NonPositiveDepth(f"point depth {z.min():.3g} m is not positive")

    Jpi = _pinhole_jacobian(cam, K)
    n = X.shape[0]

    # d(exp(d) p)/dd = [-[p]x | I] for tangent order (w, v)
    d_cam = np.zeros((n, 3, 6))
    d_cam[:, :, 3:] = np.eye(3)
    d_cam[:, 0, 1] = cam[:, 2]
    d_cam[:, 0, 2] = -cam[:, 1]
    d_cam[:, 1, 0] = -cam[:, 2]
    d_cam[:, 1, 2] = cam[:, 0]
    d_cam[:, 2, 0] = cam[:, 1]
    d_cam[:, 2, 1] = -cam[:, 0]

    d_world = np.zeros((n, 3, 6))
    d_world[:, :, 3:] = np.eye(3)
    d_world[:, 0, 1] = world[:, 2]
    d_world[:, 0, 2] = -world[:, 1]
    d_world[:, 1, 0] = -world[:, 2]
    d_world[:, 1, 2] = world[:, 0]
    d_world[:, 2, 0] = world[:, 1]
    d_world[:, 2, 1] = -world[:, 0]
    d_model = np.einsum("ab,nbk->nak", pose_cam.R, d_world)

    J = np.concatenate(
        [np.einsum("nab,nbk->nak", Jpi, d_cam), np.einsum("nab,nbk->nak", Jpi, d_model)],
        axis=2,
    )
    return J[0] if single else J


@dataclass
class PoseTangent:
    """Thin named wrapper over the 6-vector tangent parameterization."""

    values: np.ndarray = field(default_factory=lambda: np.zeros(6))

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(6)

    @property
    def rotation(self) -> np.ndarray:
        return self.values[:3]

    @property
    def translation(self) -> np.ndarray:
        return self.values[3:]
