"""Scene synthesis and rendering.

Scenes are simulated, so "inpainting" after moving an object is exact: we
simply re-render. Images are flat-shaded perspective rasters of the
table, the objects (discs and cubes), and a stick-figure robot arm;
enough for a human to draw against, photorealism is a non-goal.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .camera import CameraConfig, project, project_batch
from .errors import SceneSynthesisFailed
from .types import PixelPoint, RobotState, Vec3

BACKGROUND = (235, 235, 238)
TABLE_COLOR = (186, 148, 105)
ARM_COLOR = (70, 70, 80)
GRIPPER_OPEN_COLOR = (30, 160, 30)
GRIPPER_CLOSED_COLOR = (200, 40, 40)

REJECTION_LIMIT = 1000

# Robot base sits at the table edge; purely cosmetic.
ROBOT_BASE = Vec3(0.0, -0.62, 0.0)
ROBOT_ELBOW_HEIGHT = 0.45


@dataclass(frozen=True)
class SceneObject:
    """A manipulable object: identity, text label, pose and footprint."""

    id: str
    label: str
    position: Vec3
    radius: float
    color: tuple = (200, 60, 60)
    movable: bool = True

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")

    def is_cube(self) -> bool:
        return "cube" in self.label or "block" in self.label

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "label": self.label,
            "position": self.position.to_record(),
            "radius": self.radius,
            "color": list(self.color),
            "movable": self.movable,
        }

    @classmethod
    def from_record(cls, r: dict) -> "SceneObject":
        return cls(
            id=str(r["id"]),
            label=str(r["label"]),
            position=Vec3.from_record(r["position"]),
            radius=float(r["radius"]),
            color=tuple(r["color"]),
            movable=bool(r["movable"]),
        )


class ObjectLocator:
    """Seam for image-based object detection.

    The shipped implementation reads exact ground truth from the simulated
    scene; a real detector would consume the rendered image and the text
    labels instead.
    """

    def locate(self, scene: "Scene", labels) -> dict:
        raise NotImplementedError


class GroundTruthLocator(ObjectLocator):
    def locate(self, scene: "Scene", labels=None) -> dict:
        wanted = set(labels) if labels is not None else None
        out = {}
        for obj in scene.objects:
            if wanted is None or obj.label in wanted:
                out[obj.id] = scene.object_pixels[obj.id]
        return out


@dataclass(frozen=True)
class Scene:
    """A rendered task configuration with ground-truth pixel locations."""

    scene_id: str
    camera: CameraConfig
    objects: tuple
    robot_state: RobotState
    image: np.ndarray  # (H, W, 3) uint8
    object_pixels: dict  # id -> PixelPoint
    end_effector_pixel: PixelPoint

    def object_by_id(self, object_id: str) -> SceneObject:
        for obj in self.objects:
            if obj.id == object_id:
                return obj
        raise KeyError(object_id)

    def to_record(self, image_file: str | None = None) -> dict:
        rec = {
            "kind": "scene",
            "scene_id": self.scene_id,
            "camera": self.camera.to_record(),
            "objects": [o.to_record() for o in self.objects],
            "robot_state": self.robot_state.to_record(),
            "object_pixels": {k: v.to_record() for k, v in sorted(self.object_pixels.items())},
            "end_effector_pixel": self.end_effector_pixel.to_record(),
        }
        if image_file is not None:
            rec["image_file"] = image_file
        return rec

    @classmethod
    def from_record(cls, rec: dict, image: np.ndarray | None = None) -> "Scene":
        camera = CameraConfig.from_record(rec["camera"])
        objects = tuple(SceneObject.from_record(o) for o in rec["objects"])
        robot_state = RobotState.from_record(rec["robot_state"])
        if image is None:
            image = np.zeros((camera.height, camera.width, 3), dtype=np.uint8)
        return cls(
            scene_id=str(rec["scene_id"]),
            camera=camera,
            objects=objects,
            robot_state=robot_state,
            image=image,
            object_pixels={
                k: PixelPoint.from_record(v) for k, v in rec["object_pixels"].items()
            },
            end_effector_pixel=PixelPoint.from_record(rec["end_effector_pixel"]),
        )


# -- rasterization -----------------------------------------------------------


def _fill_convex(img: np.ndarray, pts: np.ndarray, color) -> None:
    """Fill a convex polygon given by (k, 2) pixel vertices."""
    h, w = img.shape[:2]
    cx, cy = pts.mean(axis=0)
    order = np.argsort(np.arctan2(pts[:, 1] - cy, pts[:, 0] - cx))
    poly = pts[order]
    x0 = max(int(np.floor(poly[:, 0].min())), 0)
    x1 = min(int(np.ceil(poly[:, 0].max())) + 1, w)
    y0 = max(int(np.floor(poly[:, 1].min())), 0)
    y1 = min(int(np.ceil(poly[:, 1].max())) + 1, h)
    if x0 >= x1 or y0 >= y1:
        return
    xs, ys = np.meshgrid(np.arange(x0, x1) + 0.5, np.arange(y0, y1) + 0.5)
    inside = np.ones(xs.shape, dtype=bool)
    for i in range(len(poly)):
        ax, ay = poly[i]
        bx, by = poly[(i + 1) % len(poly)]
        cross = (bx - ax) * (ys - ay) - (by - ay) * (xs - ax)
        inside &= cross >= 0
    img[y0:y1, x0:x1][inside] = color


def _thick_line(img: np.ndarray, a, b, width: float, color) -> None:
    h, w = img.shape[:2]
    ax, ay = a
    bx, by = b
    r = width / 2
    x0 = max(int(np.floor(min(ax, bx) - r)), 0)
    x1 = min(int(np.ceil(max(ax, bx) + r)) + 1, w)
    y0 = max(int(np.floor(min(ay, by) - r)), 0)
    y1 = min(int(np.ceil(max(ay, by) + r)) + 1, h)
    if x0 >= x1 or y0 >= y1:
        return
    xs, ys = np.meshgrid(np.arange(x0, x1) + 0.5, np.arange(y0, y1) + 0.5)
    dx, dy = bx - ax, by - ay
    seg2 = dx * dx + dy * dy
    if seg2 == 0:
        t = np.zeros_like(xs)
    else:
        t = np.clip(((xs - ax) * dx + (ys - ay) * dy) / seg2, 0.0, 1.0)
    dist2 = (xs - (ax + t * dx)) ** 2 + (ys - (ay + t * dy)) ** 2
    img[y0:y1, x0:x1][dist2 <= r * r] = color


def _disc(img: np.ndarray, center, radius_px: float, color) -> None:
    _thick_line(img, center, center, 2 * radius_px, color)


def _shade(color, factor: float):
    return tuple(int(np.clip(c * factor, 0, 255)) for c in color)


def render_scene(
    camera: CameraConfig,
    objects,
    robot_state: RobotState,
    table_lo=(-0.45, -0.45),
    table_hi=(0.45, 0.45),
) -> np.ndarray:
    """Deterministic flat-shaded raster of one configuration."""
    img = np.empty((camera.height, camera.width, 3), dtype=np.uint8)
    img[:] = BACKGROUND

    corners = np.array(
        [
            [table_lo[0], table_lo[1], 0.0],
            [table_hi[0], table_lo[1], 0.0],
            [table_hi[0], table_hi[1], 0.0],
            [table_lo[0], table_hi[1], 0.0],
        ]
    )
    _fill_convex(img, project_batch(camera, corners), TABLE_COLOR)

    def depth(p: Vec3) -> float:
        c = camera.rotation @ p.as_array() + camera.translation.as_array()
        return float(c[2])

    for obj in sorted(objects, key=lambda o: -depth(o.position)):
        if obj.is_cube():
            r = obj.radius
            p = obj.position
            lo = np.array([p.x - r, p.y - r, max(p.z - r, 0.0)])
            hi = np.array([p.x + r, p.y + r, p.z + r])
            corners = np.array(
                [[x, y, z] for x in (lo[0], hi[0]) for y in (lo[1], hi[1]) for z in (lo[2], hi[2])]
            )
            pix = project_batch(camera, corners)
            faces = [  # (corner indices, shade)
                ((1, 3, 7, 5), 1.0),  # top (z = hi)
                ((0, 1, 5, 4), 0.8),
                ((0, 1, 3, 2), 0.7),
                ((4, 5, 7, 6), 0.7),
                ((2, 3, 7, 6), 0.8),
            ]
            for idx, shade in faces:
                _fill_convex(img, pix[list(idx)], _shade(obj.color, shade))
        else:
            angles = np.linspace(0, 2 * np.pi, 24, endpoint=False)
            ring = np.column_stack(
                [
                    obj.position.x + obj.radius * np.cos(angles),
                    obj.position.y + obj.radius * np.sin(angles),
                    np.full(24, obj.position.z),
                ]
            )
            _fill_convex(img, project_batch(camera, ring), obj.color)
            inner = ring.copy()
            inner[:, :2] = obj.position.x, obj.position.y
            inner[:, :2] += (ring[:, :2] - inner[:, :2]) * 0.6
            _fill_convex(img, project_batch(camera, inner), _shade(obj.color, 0.75))

    # Stick-figure arm: base -> elbow -> end-effector.
    ee = robot_state.position
    elbow = Vec3(
        (ROBOT_BASE.x + ee.x) / 2, (ROBOT_BASE.y + ee.y) / 2, ROBOT_ELBOW_HEIGHT
    )
    pts = [project(camera, p) for p in (ROBOT_BASE, elbow, ee)]
    _thick_line(img, (pts[0].u, pts[0].v), (pts[1].u, pts[1].v), 9.0, ARM_COLOR)
    _thick_line(img, (pts[1].u, pts[1].v), (pts[2].u, pts[2].v), 7.0, ARM_COLOR)
    grip_color = GRIPPER_CLOSED_COLOR if robot_state.gripper else GRIPPER_OPEN_COLOR
    _disc(img, (pts[2].u, pts[2].v), 6.0, grip_color)
    return img


def make_scene(scene_id: str, camera: CameraConfig, objects, robot_state: RobotState) -> Scene:
    image = render_scene(camera, objects, robot_state)
    object_pixels = {o.id: project(camera, o.position) for o in objects}
    return Scene(
        scene_id=scene_id,
        camera=camera,
        objects=tuple(objects),
        robot_state=robot_state,
        image=image,
        object_pixels=object_pixels,
        end_effector_pixel=project(camera, robot_state.position),
    )


# -- synthesis ---------------------------------------------------------------


@dataclass(frozen=True)
class PlacementConstraints:
    """Where movable objects may land when a scene is varied."""

    region_lo: tuple = (-0.3, -0.3)
    region_hi: tuple = (0.3, 0.3)
    min_center_distance: float = 0.0  # from table center, in the xy plane
    center: tuple = (0.0, 0.0)
    min_separation: float = 0.02  # gap between object footprints

    def to_record(self) -> dict:
        return {
            "region_lo": list(self.region_lo),
            "region_hi": list(self.region_hi),
            "min_center_distance": self.min_center_distance,
            "center": list(self.center),
            "min_separation": self.min_separation,
        }

    @classmethod
    def from_record(cls, r: dict) -> "PlacementConstraints":
        return cls(
            region_lo=tuple(r["region_lo"]),
            region_hi=tuple(r["region_hi"]),
            min_center_distance=float(r["min_center_distance"]),
            center=tuple(r["center"]),
            min_separation=float(r["min_separation"]),
        )


def _sample_positions(objects, constraints: PlacementConstraints, rng) -> list:
    """One rejection-sampled joint placement of the movable objects."""
    placed = [o for o in objects if not o.movable]
    out = []
    for obj in objects:
        if not obj.movable:
            out.append(obj)
            continue
        for _ in range(REJECTION_LIMIT):
            xy = rng.uniform(size=2) * (
                np.subtract(constraints.region_hi, constraints.region_lo)
            ) + constraints.region_lo
            if np.hypot(xy[0] - constraints.center[0], xy[1] - constraints.center[1]) < (
                constraints.min_center_distance
            ):
                continue
            candidate = replace(obj, position=Vec3(float(xy[0]), float(xy[1]), obj.position.z))
            clear = all(
                np.hypot(
                    candidate.position.x - other.position.x,
                    candidate.position.y - other.position.y,
                )
                >= candidate.radius + other.radius + constraints.min_separation
                for other in placed
            )
            if clear:
                placed.append(candidate)
                out.append(candidate)
                break
        else:
            raise SceneSynthesisFailed(
                f"could not place {obj.id!r} after {REJECTION_LIMIT} rejection samples"
            )
    return out


def synthesize_scenes(
    base: Scene, m: int, seed: int, constraints: PlacementConstraints | None = None
) -> list:
    """Generate m scene variations by repositioning every movable object.

    Placement is uniform over the constraint region, conditioned on
    non-overlap and the task constraints; re-rendering from scratch keeps
    vacated regions clean. Bitwise reproducible for a given seed.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if constraints is None:
        constraints = PlacementConstraints()
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xC0DE)))
    out = []
    for i in range(m):
        objects = _sample_positions(base.objects, constraints, rng)
        out.append(
            make_scene(f"{base.scene_id}-{i:03d}", base.camera, objects, base.robot_state)
        )
    return out


# -- scene bundles on disk ---------------------------------------------------


def write_ppm(path, image: np.ndarray) -> None:
    h, w = image.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode())
        fh.write(image.tobytes())


def read_ppm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if not data.startswith(b"P6"):
        raise ValueError(f"{path} is not a binary PPM file")
    parts = []
    idx = 2
    while len(parts) < 3:
        while idx < len(data) and data[idx : idx + 1].isspace():
            idx += 1
        if data[idx : idx + 1] == b"#":
            while data[idx : idx + 1] != b"\n":
                idx += 1
            continue
        start = idx
        while not data[idx : idx + 1].isspace():
            idx += 1
        parts.append(int(data[start:idx]))
    idx += 1
    w, h, maxval = parts
    if maxval != 255:
        raise ValueError("only 8-bit PPM supported")
    pixels = np.frombuffer(data, dtype=np.uint8, count=w * h * 3, offset=idx)
    return pixels.reshape(h, w, 3).copy()


def write_scene_bundle(directory, scenes) -> None:
    """Write <id>.ppm files plus a scenes.l2d2 record file."""
    from . import records

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    recs = []
    for scene in scenes:
        image_file = f"{scene.scene_id}.ppm"
        write_ppm(directory / image_file, scene.image)
        recs.append(scene.to_record(image_file=image_file))
    records.write_records(directory / "scenes.l2d2", recs)


def read_scene_bundle(directory) -> dict:
    from . import records

    directory = Path(directory)
    out = {}
    for rec in records.read_records(directory / "scenes.l2d2"):
        image = None
        if "image_file" in rec:
            p = directory / rec["image_file"]
            if p.exists():
                image = read_ppm(p)
        scene = Scene.from_record(rec, image=image)
        out[scene.scene_id] = scene
    return out
