"""Compile drawings into reconstructed state-action datasets.

Each waypoint pixel is mapped to a 3D position, robot states are
assembled from the reconstruction plus the drawn annotations, object
tracks are simulated with the attachment rule, and actions are the
differences between consecutive states. States are built by integrating
those differences, so every dataset is self-consistent bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .camera import in_bounds
from .errors import L2D2Error
from .scenes import GroundTruthLocator, Scene
from .types import (
    Action,
    ActionLimits,
    DEFAULT_ATTACH_RADIUS,
    DemoDataset,
    Drawing,
    PROVENANCE_RECONSTRUCTED,
    RobotState,
    Rotation,
    SystemState,
    Vec3,
)


def as_reconstructor(f):
    """Accept an Approximator or any (n, 2) -> (n, 3) callable."""
    if isinstance(f, nn.Approximator):
        return lambda pixels: nn.forward_batch(f, pixels)
    if callable(f):
        return f
    raise TypeError(f"cannot use {type(f).__name__} as a pixel-to-position mapping")


@dataclass
class CompileReport:
    """Per-trajectory quality notes gathered while compiling."""

    scene_id: str
    waypoints: int = 0
    extrapolated_pixels: int = 0  # waypoints outside the image bounds
    clamped_steps: int = 0  # steps cut down to the per-step motion limits
    attached_object: str | None = None
    attach_step: int | None = None


def compile_drawing(
    drawing: Drawing,
    scene: Scene,
    mapping,
    limits: ActionLimits | None = None,
    attach_radius: float = DEFAULT_ATTACH_RADIUS,
    locator=None,
):
    """Convert one drawing into a (state, action) trajectory.

    Object positions come from reconstructing their pixel locations with
    the same mapping; from the first step where the gripper is closed
    within ``attach_radius`` of an object, that object moves rigidly with
    the end-effector until the gripper opens (re-grasping is allowed).
    The final pair carries a zero action as the terminal marker.
    """
    if limits is None:
        limits = ActionLimits()
    recon = as_reconstructor(mapping)
    locator = locator or GroundTruthLocator()
    report = CompileReport(scene_id=drawing.scene_id, waypoints=len(drawing.waypoints))

    pixels = drawing.pixels()
    raw_positions = recon(pixels)
    report.extrapolated_pixels = int(
        sum(0 if in_bounds(scene.camera, w.pixel) else 1 for w in drawing.waypoints)
    )

    object_ids = [o.id for o in scene.objects]
    object_pix = locator.locate(scene)
    object_start = {
        oid: recon(np.array([[object_pix[oid].u, object_pix[oid].v]]))[0]
        for oid in object_ids
    }

    rotations = np.array([w.rotation.as_array() for w in drawing.waypoints])
    grippers = [w.gripper for w in drawing.waypoints]

    n = len(drawing.waypoints)
    # Integrate clamped deltas so consecutive states differ by exactly the
    # recorded action.
    positions = np.empty((n, 3))
    rots = np.empty((n, 3))
    positions[0] = raw_positions[0]
    rots[0] = rotations[0]
    d_pos = np.zeros((n, 3))
    d_rot = np.zeros((n, 3))
    for t in range(n - 1):
        dp, dr, clamped = limits.clamp_arrays(
            raw_positions[t + 1] - positions[t], rotations[t + 1] - rots[t]
        )
        if clamped:
            report.clamped_steps += 1
        d_pos[t] = dp
        d_rot[t] = dr
        positions[t + 1] = positions[t] + dp
        rots[t + 1] = rots[t] + dr

    # Object tracks under the attachment rule.
    tracks = {oid: [object_start[oid]] for oid in object_ids}
    attached = None
    offset = None
    for t in range(n):
        if t > 0:
            for oid in object_ids:
                prev = tracks[oid][-1]
                if attached == oid:
                    tracks[oid].append(positions[t] + offset)
                else:
                    tracks[oid].append(prev)
        current = {oid: tracks[oid][-1] for oid in object_ids}
        if grippers[t] == 1 and attached is None:
            best = None
            for oid in object_ids:
                d = float(np.linalg.norm(positions[t] - current[oid]))
                if d < attach_radius and (best is None or d < best[1]):
                    best = (oid, d)
            if best is not None:
                attached = best[0]
                offset = current[attached] - positions[t]
                if report.attached_object is None:
                    report.attached_object = attached
                    report.attach_step = t
        elif grippers[t] == 0 and attached is not None:
            attached = None
            offset = None

    pairs = []
    for t in range(n):
        # Integration moves toward in-range targets, so rots stays within
        # [-pi, pi]; Rotation re-validates rather than clipping, since a
        # clip here would silently break the exact state/action chain.
        state = SystemState(
            RobotState(
                Vec3.from_array(positions[t]),
                Rotation.from_array(rots[t]),
                grippers[t],
            ),
            tuple((oid, Vec3.from_array(tracks[oid][t])) for oid in object_ids),
        )
        if t < n - 1:
            action = Action(
                Vec3.from_array(d_pos[t]),
                Rotation.from_array(d_rot[t]),
                float(grippers[t + 1] - grippers[t]),
            )
        else:
            action = Action.zero()
        pairs.append((state, action))
    return pairs, report


def compile_dataset(
    drawings,
    scenes: dict,
    mapping,
    limits: ActionLimits | None = None,
    attach_radius: float = DEFAULT_ATTACH_RADIUS,
    locator=None,
):
    """Compile a batch of drawings into one reconstructed dataset.

    Failing drawings are skipped and reported rather than aborting the
    batch; interactive sessions should not lose prior work.
    """
    dataset = DemoDataset(provenance=PROVENANCE_RECONSTRUCTED)
    reports = []
    skipped = []
    for drawing in drawings:
        scene = scenes.get(drawing.scene_id)
        if scene is None:
            skipped.append((drawing.scene_id, "unknown scene"))
            continue
        try:
            pairs, report = compile_drawing(
                drawing, scene, mapping, limits=limits,
                attach_radius=attach_radius, locator=locator,
            )
        except L2D2Error as e:
            skipped.append((drawing.scene_id, str(e)))
            continue
        dataset.extend(pairs)
        reports.append(report)
    return dataset, reports, skipped
