"""Pinhole projection between the robot frame and the image plane.

The camera looks along its +z axis; image u points right, v points down,
origin at the top-left. Projection divides by camera-frame depth and
offsets by the principal point, so visible points land in non-negative
image coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BehindCamera
from .types import PixelPoint, Vec3

DEFAULT_WIDTH = 960
DEFAULT_HEIGHT = 720
DEFAULT_FOCAL = 800.0

# Points closer than this to the image plane (in meters) cannot project.
MIN_DEPTH = 1e-3


@dataclass(frozen=True)
class CameraConfig:
    """Extrinsics (robot frame -> camera frame) plus pinhole intrinsics."""

    rotation: np.ndarray  # 3x3, rows are the camera axes in the robot frame
    translation: Vec3
    fx: float = DEFAULT_FOCAL
    fy: float = DEFAULT_FOCAL
    cx: float = DEFAULT_WIDTH / 2
    cy: float = DEFAULT_HEIGHT / 2
    width: int = DEFAULT_WIDTH
    height: int = DEFAULT_HEIGHT
    z_min: float = field(default=MIN_DEPTH, compare=False)

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64)
        if r.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {r.shape}")
        if not np.allclose(r @ r.T, np.eye(3), atol=1e-9):
            raise ValueError("rotation matrix is not orthonormal to 1e-9")
        if abs(np.linalg.det(r) - 1.0) > 1e-9:
            raise ValueError("rotation matrix determinant is not +1")
        object.__setattr__(self, "rotation", r)
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    @classmethod
    def identity(cls, **kwargs) -> "CameraConfig":
        return cls(rotation=np.eye(3), translation=Vec3(0.0, 0.0, 0.0), **kwargs)

    def to_record(self) -> dict:
        return {
            "kind": "camera",
            "rotation": [[float(v) for v in row] for row in self.rotation],
            "translation": self.translation.to_record(),
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "width": self.width,
            "height": self.height,
        }

    @classmethod
    def from_record(cls, r: dict) -> "CameraConfig":
        return cls(
            rotation=np.array(r["rotation"], dtype=np.float64),
            translation=Vec3.from_record(r["translation"]),
            fx=float(r["fx"]),
            fy=float(r["fy"]),
            cx=float(r["cx"]),
            cy=float(r["cy"]),
            width=int(r["width"]),
            height=int(r["height"]),
        )


def to_camera_frame(cfg: CameraConfig, p_r: Vec3) -> Vec3:
    """Apply the rigid transform: p_C = R @ p_R + t."""
    p = cfg.rotation @ p_r.as_array() + cfg.translation.as_array()
    return Vec3.from_array(p)


def to_camera_frame_batch(cfg: CameraConfig, points: np.ndarray) -> np.ndarray:
    return points @ cfg.rotation.T + cfg.translation.as_array()


def project(cfg: CameraConfig, p_r: Vec3) -> PixelPoint:
    """Project a robot-frame point onto the image plane."""
    p_c = to_camera_frame(cfg, p_r)
    if p_c.z <= cfg.z_min:
        raise BehindCamera(f"point depth {p_c.z:.4f} m is at or behind the camera")
    return PixelPoint(
        cfg.cx + p_c.x * cfg.fx / p_c.z,
        cfg.cy + p_c.y * cfg.fy / p_c.z,
    )


def project_batch(cfg: CameraConfig, points: np.ndarray) -> np.ndarray:
    """Project an (n, 3) array of robot-frame points to (n, 2) pixels."""
    cam = to_camera_frame_batch(cfg, np.asarray(points, dtype=np.float64))
    z = cam[:, 2]
    if np.any(z <= cfg.z_min):
        raise BehindCamera("some points are at or behind the camera")
    out = np.empty((len(cam), 2))
    out[:, 0] = cfg.cx + cam[:, 0] * cfg.fx / z
    out[:, 1] = cfg.cy + cam[:, 1] * cfg.fy / z
    return out


def unproject_with_depth(cfg: CameraConfig, p: PixelPoint, z_c: float) -> Vec3:
    """Invert the projection at a known camera-frame depth.

    Ground-truth helper for the simulator and test oracles only; the
    learned mapping never sees depths.
    """
    if z_c <= 0:
        raise ValueError(f"depth must be positive, got {z_c}")
    x_c = (p.u - cfg.cx) * z_c / cfg.fx
    y_c = (p.v - cfg.cy) * z_c / cfg.fy
    cam = np.array([x_c, y_c, z_c])
    robot = cfg.rotation.T @ (cam - cfg.translation.as_array())
    return Vec3.from_array(robot)


def in_bounds(cfg: CameraConfig, p: PixelPoint) -> bool:
    return 0 <= p.u < cfg.width and 0 <= p.v < cfg.height
