"""Shared domain vocabulary: states, drawings, actions, and datasets.

Everything here is a plain value type. Record dicts produced by
``to_record`` round-trip exactly through the line-record file format
(see :mod:`l2d2.records`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BadAnnotation, DegenerateDrawing

# Waypoints per drawing after resampling. Dense enough that per-step
# deltas stay under the motion limits at desk scale, small enough for
# fast training.
DEFAULT_WAYPOINTS = 75

# Validation limits for drawings.
DEFAULT_MAX_PIXEL_STEP = 40.0
DEFAULT_MAX_GRIPPER_TOGGLES = 6

# A closed gripper within this distance of an object's grasp point picks
# it up; shared by the simulator and the drawing compiler.
DEFAULT_ATTACH_RADIUS = 0.04


def _require_finite(name: str, *values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise ValueError(f"{name} must be finite, got {v!r}")


@dataclass(frozen=True)
class Vec3:
    """A 3D point or displacement in meters (workspace frame unless noted)."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        _require_finite("Vec3", self.x, self.y, self.z)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=np.float64)

    @classmethod
    def from_array(cls, a) -> "Vec3":
        return cls(float(a[0]), float(a[1]), float(a[2]))

    def add(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x + other.x, self.y + other.y, self.z + other.z)

    def sub(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x - other.x, self.y - other.y, self.z - other.z)

    def dist(self, other: "Vec3") -> float:
        return math.sqrt(
            (self.x - other.x) ** 2 + (self.y - other.y) ** 2 + (self.z - other.z) ** 2
        )

    def to_record(self) -> list:
        return [self.x, self.y, self.z]

    @classmethod
    def from_record(cls, r) -> "Vec3":
        return cls(float(r[0]), float(r[1]), float(r[2]))


@dataclass(frozen=True)
class PixelPoint:
    """A 2D image point in pixels; u rightward, v downward, origin top-left."""

    u: float
    v: float

    def __post_init__(self):
        _require_finite("PixelPoint", self.u, self.v)

    def as_array(self) -> np.ndarray:
        return np.array([self.u, self.v], dtype=np.float64)

    def dist(self, other: "PixelPoint") -> float:
        return math.hypot(self.u - other.u, self.v - other.v)

    def to_record(self) -> list:
        return [self.u, self.v]

    @classmethod
    def from_record(cls, r) -> "PixelPoint":
        return cls(float(r[0]), float(r[1]))


@dataclass(frozen=True)
class Rotation:
    """Fixed-axis Euler angles (radians) about the robot base axes.

    Also used for per-step rotation deltas, which stay well inside the
    same [-pi, pi] component range.
    """

    rx: float
    ry: float
    rz: float

    def __post_init__(self):
        _require_finite("Rotation", self.rx, self.ry, self.rz)
        for name, v in (("rx", self.rx), ("ry", self.ry), ("rz", self.rz)):
            if not -math.pi <= v <= math.pi:
                raise ValueError(f"Rotation.{name}={v} outside [-pi, pi]")

    def as_array(self) -> np.ndarray:
        return np.array([self.rx, self.ry, self.rz], dtype=np.float64)

    @classmethod
    def from_array(cls, a) -> "Rotation":
        return cls(float(a[0]), float(a[1]), float(a[2]))

    def to_record(self) -> list:
        return [self.rx, self.ry, self.rz]

    @classmethod
    def from_record(cls, r) -> "Rotation":
        return cls(float(r[0]), float(r[1]), float(r[2]))


def rotation_matrix(r: Rotation) -> np.ndarray:
    """3x3 matrix for fixed-axis Euler angles, applied as Rz @ Ry @ Rx.

    This is the shared convention fixture contract: (0, 0, pi/2) maps the
    +x axis onto +y.
    """
    cx, sx = math.cos(r.rx), math.sin(r.rx)
    cy, sy = math.cos(r.ry), math.sin(r.ry)
    cz, sz = math.cos(r.rz), math.sin(r.rz)
    rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return rz @ ry @ rx


@dataclass(frozen=True)
class RobotState:
    """End-effector position, orientation triple, and a binary gripper."""

    position: Vec3
    rotation: Rotation
    gripper: int

    def __post_init__(self):
        if self.gripper not in (0, 1):
            raise ValueError(f"gripper must be 0 or 1, got {self.gripper!r}")

    def to_record(self) -> dict:
        return {
            "position": self.position.to_record(),
            "rotation": self.rotation.to_record(),
            "gripper": self.gripper,
        }

    @classmethod
    def from_record(cls, r: dict) -> "RobotState":
        return cls(
            Vec3.from_record(r["position"]),
            Rotation.from_record(r["rotation"]),
            int(r["gripper"]),
        )


@dataclass(frozen=True)
class SystemState:
    """Robot state plus the observed object positions, in a stable order."""

    robot: RobotState
    objects: tuple  # tuple of (object_id, Vec3)

    def __post_init__(self):
        ids = [oid for oid, _ in self.objects]
        if len(ids) != len(set(ids)):
            raise ValueError(f"duplicate object ids: {ids}")
        object.__setattr__(self, "objects", tuple(self.objects))

    def object_position(self, object_id: str) -> Vec3:
        for oid, pos in self.objects:
            if oid == object_id:
                return pos
        raise KeyError(object_id)

    def to_record(self) -> dict:
        return {
            "robot": self.robot.to_record(),
            "objects": [[oid, pos.to_record()] for oid, pos in self.objects],
        }

    @classmethod
    def from_record(cls, r: dict) -> "SystemState":
        return cls(
            RobotState.from_record(r["robot"]),
            tuple((oid, Vec3.from_record(pos)) for oid, pos in r["objects"]),
        )


@dataclass(frozen=True)
class ActionLimits:
    """Per-dimension clamp limits for one control step."""

    position: float = 0.025  # meters per axis per step
    rotation: float = 0.15  # radians per axis per step

    def clamp_arrays(self, d_pos: np.ndarray, d_rot: np.ndarray):
        cp = np.clip(d_pos, -self.position, self.position)
        cr = np.clip(d_rot, -self.rotation, self.rotation)
        clamped = bool(np.any(cp != d_pos) or np.any(cr != d_rot))
        return cp, cr, clamped

    def to_record(self) -> dict:
        return {"position": self.position, "rotation": self.rotation}

    @classmethod
    def from_record(cls, r: dict) -> "ActionLimits":
        return cls(float(r["position"]), float(r["rotation"]))


@dataclass(frozen=True)
class Action:
    """A single-step state difference: position/rotation deltas plus a
    gripper command in {-1, 0, +1} (open / hold / close)."""

    d_position: Vec3
    d_rotation: Rotation
    d_gripper: float

    def __post_init__(self):
        _require_finite("Action.d_gripper", self.d_gripper)
        if self.d_gripper not in (-1.0, 0.0, 1.0):
            raise ValueError(f"d_gripper must be -1, 0 or +1, got {self.d_gripper!r}")

    def as_array(self) -> np.ndarray:
        return np.concatenate(
            [self.d_position.as_array(), self.d_rotation.as_array(), [self.d_gripper]]
        )

    @classmethod
    def zero(cls) -> "Action":
        return cls(Vec3(0.0, 0.0, 0.0), Rotation(0.0, 0.0, 0.0), 0.0)

    def to_record(self) -> dict:
        return {
            "d_position": self.d_position.to_record(),
            "d_rotation": self.d_rotation.to_record(),
            "d_gripper": self.d_gripper,
        }

    @classmethod
    def from_record(cls, r: dict) -> "Action":
        return cls(
            Vec3.from_record(r["d_position"]),
            Rotation.from_record(r["d_rotation"]),
            float(r["d_gripper"]),
        )


@dataclass(frozen=True)
class DrawingWaypoint:
    """One annotated point of a drawing: pixel, rotation, gripper bit."""

    pixel: PixelPoint
    rotation: Rotation
    gripper: int

    def __post_init__(self):
        if self.gripper not in (0, 1):
            raise ValueError(f"gripper must be 0 or 1, got {self.gripper!r}")

    def to_record(self) -> dict:
        return {
            "pixel": self.pixel.to_record(),
            "rotation": self.rotation.to_record(),
            "gripper": self.gripper,
        }

    @classmethod
    def from_record(cls, r: dict) -> "DrawingWaypoint":
        return cls(
            PixelPoint.from_record(r["pixel"]),
            Rotation.from_record(r["rotation"]),
            int(r["gripper"]),
        )


@dataclass(frozen=True)
class Drawing:
    """A resampled, annotated pixel trajectory drawn on one scene."""

    scene_id: str
    waypoints: tuple  # tuple of DrawingWaypoint

    def __post_init__(self):
        object.__setattr__(self, "waypoints", tuple(self.waypoints))
        if len(self.waypoints) < 2:
            raise ValueError("a drawing needs at least 2 waypoints")

    def validate(
        self,
        max_pixel_step: float = DEFAULT_MAX_PIXEL_STEP,
        max_gripper_toggles: int = DEFAULT_MAX_GRIPPER_TOGGLES,
    ) -> None:
        """Check the step-size and gripper-chatter invariants."""
        for a, b in zip(self.waypoints, self.waypoints[1:]):
            step = a.pixel.dist(b.pixel)
            if step > max_pixel_step:
                raise ValueError(
                    f"pixel step {step:.1f}px exceeds limit {max_pixel_step}px"
                )
        toggles = sum(
            1
            for a, b in zip(self.waypoints, self.waypoints[1:])
            if a.gripper != b.gripper
        )
        if toggles > max_gripper_toggles:
            raise ValueError(f"{toggles} gripper toggles exceed {max_gripper_toggles}")

    def pixels(self) -> np.ndarray:
        return np.array([[w.pixel.u, w.pixel.v] for w in self.waypoints])

    def to_record(self) -> dict:
        return {
            "scene_id": self.scene_id,
            "waypoints": [w.to_record() for w in self.waypoints],
        }

    @classmethod
    def from_record(cls, r: dict) -> "Drawing":
        return cls(
            str(r["scene_id"]),
            tuple(DrawingWaypoint.from_record(w) for w in r["waypoints"]),
        )


PROVENANCE_RECONSTRUCTED = "reconstructed"
PROVENANCE_ORACLE = "oracle"


@dataclass
class DemoDataset:
    """Ordered state-action pairs with trajectory boundaries.

    ``boundaries`` holds the pair index at which each trajectory starts;
    the first entry is always 0 for a non-empty dataset.
    """

    pairs: list = field(default_factory=list)  # list of (SystemState, Action)
    provenance: str = PROVENANCE_RECONSTRUCTED
    boundaries: list = field(default_factory=list)

    def __post_init__(self):
        if self.provenance not in (PROVENANCE_RECONSTRUCTED, PROVENANCE_ORACLE):
            raise ValueError(f"unknown provenance {self.provenance!r}")
        self._check_boundaries()

    def _check_boundaries(self):
        if self.pairs and (not self.boundaries or self.boundaries[0] != 0):
            raise ValueError("first trajectory boundary must be index 0")
        prev = -1
        for b in self.boundaries:
            if not 0 <= b < max(len(self.pairs), 1) or b <= prev:
                raise ValueError(f"invalid boundary index {b}")
            prev = b

    def __len__(self) -> int:
        return len(self.pairs)

    def n_trajectories(self) -> int:
        return len(self.boundaries)

    def trajectories(self):
        """Yield the pair slice of each trajectory in order."""
        for i, start in enumerate(self.boundaries):
            end = self.boundaries[i + 1] if i + 1 < len(self.boundaries) else len(self.pairs)
            yield self.pairs[start:end]

    def extend(self, trajectory_pairs: list) -> None:
        """Append one trajectory, recording its boundary."""
        if not trajectory_pairs:
            return
        self.boundaries.append(len(self.pairs))
        self.pairs.extend(trajectory_pairs)


def resample_drawing(raw, n: int):
    """Resample a polyline to ``n`` points uniformly spaced by arc length.

    Endpoints are preserved exactly. ``raw`` is a sequence of PixelPoint
    (or (u, v) pairs); at least two distinct points are required.
    """
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    pts = np.array(
        [[p.u, p.v] if isinstance(p, PixelPoint) else [p[0], p[1]] for p in raw],
        dtype=np.float64,
    )
    if len(pts) < 2:
        raise DegenerateDrawing("need at least 2 raw points")
    diffs = np.diff(pts, axis=0)
    # hypot rather than norm: squaring underflows for near-coincident
    # points, which would misclassify a distinct pair as degenerate.
    seg = np.hypot(diffs[:, 0], diffs[:, 1])
    total = float(seg.sum())
    if total == 0.0:
        raise DegenerateDrawing("all raw points are identical")
    cum = np.concatenate([[0.0], np.cumsum(seg)])

    out = np.empty((n, 2))
    out[0] = pts[0]
    out[-1] = pts[-1]
    targets = np.arange(1, n - 1) * (total / (n - 1))
    # Index of the segment containing each target arc length.
    idx = np.searchsorted(cum, targets, side="right") - 1
    idx = np.clip(idx, 0, len(seg) - 1)
    # Zero-length segments never contain a strictly interior target.
    denom = np.where(seg[idx] > 0, seg[idx], 1.0)
    t = (targets - cum[idx]) / denom
    out[1:-1] = pts[idx] + t[:, None] * (pts[idx + 1] - pts[idx])
    return [PixelPoint(float(u), float(v)) for u, v in out]


def interpolate_annotations(
    keypoints,
    gripper_events,
    n: int,
    initial_gripper: int = 0,
):
    """Expand sparse annotations to one (Rotation, gripper) per waypoint.

    Rotations interpolate linearly component-wise between keypoints and
    hold constant before the first and after the last. The gripper holds
    its last commanded value, starting from ``initial_gripper``.
    """
    if not keypoints:
        raise BadAnnotation("at least one rotation keypoint is required")
    for seq, what in ((keypoints, "keypoint"), (gripper_events, "gripper event")):
        prev = -1
        for idx, _ in seq:
            if not 0 <= idx < n:
                raise BadAnnotation(f"{what} index {idx} out of range [0, {n})")
            if idx <= prev:
                raise BadAnnotation(f"{what} indices must be strictly increasing")
            prev = idx

    kp_idx = np.array([i for i, _ in keypoints], dtype=np.float64)
    kp_rot = np.array([r.as_array() if isinstance(r, Rotation) else list(r) for _, r in keypoints])
    spans = np.abs(np.diff(kp_rot, axis=0))
    if spans.size and spans.max() > math.pi:
        raise BadAnnotation(
            "rotation keypoints differ by more than pi in one component; "
            "wrap-around within a span is not supported"
        )

    steps = np.arange(n, dtype=np.float64)
    rot = np.stack(
        [np.interp(steps, kp_idx, kp_rot[:, c]) for c in range(3)], axis=1
    )

    grip = np.full(n, initial_gripper, dtype=np.int64)
    for idx, g in gripper_events:
        if g not in (0, 1):
            raise BadAnnotation(f"gripper event value must be 0 or 1, got {g!r}")
        grip[idx:] = g

    return [
        (Rotation(float(r[0]), float(r[1]), float(r[2])), int(g))
        for r, g in zip(rot, grip)
    ]
