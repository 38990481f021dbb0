"""Scripted stand-in for a human sketcher.

Projects a scripted-expert path onto the scene image, perturbs it with
pixel noise, and annotates rotations and gripper events the way the
drawing interface would, then routes everything through the same
resample-and-interpolate path a submitted stroke takes.
"""

from __future__ import annotations

import numpy as np

from . import sim
from .camera import project_batch
from .scenes import Scene
from .types import (
    DEFAULT_WAYPOINTS,
    Drawing,
    DrawingWaypoint,
    PixelPoint,
    Rotation,
    interpolate_annotations,
    resample_drawing,
)

DEFAULT_NOISE_PX = 3.0


def arc_fractions(points: np.ndarray) -> np.ndarray:
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    if total == 0:
        return np.zeros(len(points))
    return cum / total


def map_indices_to_resampled(fractions, raw_indices, n: int):
    """Map raw-sample annotation indices onto the resampled waypoint grid.

    Keeps indices strictly increasing by bumping collisions forward, which
    mirrors how closely spaced clicks land on distinct waypoints.
    """
    out = []
    prev = -1
    for idx in raw_indices:
        j = int(round(fractions[idx] * (n - 1)))
        j = max(j, prev + 1)
        j = min(j, n - 1)
        if j <= prev:
            j = prev  # saturated at the end; drop by caller
        out.append(j)
        prev = j
    return out


def drawing_from_states(
    states,
    scene: Scene,
    n_waypoints: int = DEFAULT_WAYPOINTS,
    noise_px: float = DEFAULT_NOISE_PX,
    seed: int = 0,
) -> Drawing:
    """Build an annotated drawing from a sequence of robot states."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xD4A7)))
    cam = scene.camera
    positions = np.array([s.position.as_array() for s in states])
    pixels = project_batch(cam, positions)
    noisy = pixels + rng.normal(scale=noise_px, size=pixels.shape)
    # Keep the stroke start snapped to the rendered end-effector so the
    # submission rule (start within 15 px) is honest rather than lucky.
    noisy[0] = pixels[0]
    noisy[:, 0] = np.clip(noisy[:, 0], 0.0, cam.width - 1.0)
    noisy[:, 1] = np.clip(noisy[:, 1], 0.0, cam.height - 1.0)

    fractions = arc_fractions(noisy)

    rotations = np.array([s.rotation.as_array() for s in states])
    keypoint_raw = [0]
    for t in range(1, len(states)):
        if np.abs(rotations[t] - rotations[keypoint_raw[-1]]).max() > 1e-6:
            keypoint_raw.append(t)
    grippers = [s.gripper for s in states]
    event_raw = [t for t in range(1, len(states)) if grippers[t] != grippers[t - 1]]

    kp_idx = map_indices_to_resampled(fractions, keypoint_raw, n_waypoints)
    ev_idx = map_indices_to_resampled(fractions, event_raw, n_waypoints)

    keypoints = []
    seen = set()
    for raw, j in zip(keypoint_raw, kp_idx):
        if j not in seen:
            keypoints.append((j, Rotation.from_array(rotations[raw])))
            seen.add(j)
    events = []
    seen = set()
    for raw, j in zip(event_raw, ev_idx):
        if j not in seen:
            events.append((j, grippers[raw]))
            seen.add(j)

    stroke = [PixelPoint(float(u), float(v)) for u, v in noisy]
    resampled = resample_drawing(stroke, n_waypoints)
    annotations = interpolate_annotations(
        keypoints, events, n_waypoints, initial_gripper=grippers[0]
    )
    waypoints = tuple(
        DrawingWaypoint(p, rot, g) for p, (rot, g) in zip(resampled, annotations)
    )
    return Drawing(scene_id=scene.scene_id, waypoints=waypoints)


def synthetic_drawing(
    task: sim.TaskSpec,
    scene: Scene,
    n_waypoints: int = DEFAULT_WAYPOINTS,
    noise_px: float = DEFAULT_NOISE_PX,
    seed: int = 0,
) -> Drawing:
    """Run the scripted expert on the scene's configuration and draw it."""
    world = sim.world_from_scene(scene)
    pairs, _ = sim.oracle_demo(task, world)
    states = [s.robot for s, _ in pairs]
    return drawing_from_states(
        states, scene, n_waypoints=n_waypoints, noise_px=noise_px, seed=seed
    )
