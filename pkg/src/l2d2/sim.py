"""Kinematic workspace simulator, scripted experts, and task scoring.

The simulator stands in for the physical robot: velocity-integrated
end-effector motion, a discrete attach/release contact model, and no
forces. The attach rule is exactly the part a drawing cannot convey, so
it is where grounding has to earn its keep. Policies never see these
dynamics; they only act through states.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import OracleFailed
from .scenes import PlacementConstraints, SceneObject, make_scene
from .types import (
    Action,
    ActionLimits,
    DEFAULT_ATTACH_RADIUS,
    DemoDataset,
    PROVENANCE_ORACLE,
    RobotState,
    Rotation,
    SystemState,
    Vec3,
)

REACH_THRESHOLD = 0.06
LIFT_THRESHOLD = 0.15
DELIVER_THRESHOLD = 0.06
PUSH_TARGET_THRESHOLD = 0.05
SCOOP_ROTATION = 0.8

DEFAULT_HORIZON = 300

TABLE_LO = (-0.45, -0.45)
TABLE_HI = (0.45, 0.45)
SAFETY_LO = (-0.6, -0.6, 0.0)
SAFETY_HI = (0.6, 0.6, 0.5)

HOME_POSITION = Vec3(0.0, -0.3, 0.2)
HOME_ROTATION = Rotation(0.0, 0.0, 0.0)

# Scripted expert motion per step; inside the action limits.
ORACLE_STEP = 0.02
ORACLE_ROT_STEP = 0.1
# Gripper commands are held for a few steps so demonstrations carry a
# wider neighborhood of the contact state, not a single spike.
ORACLE_GRIP_DWELL = 3


@dataclass(frozen=True)
class SimWorld:
    """Full simulator state; stepping returns a new world."""

    robot: RobotState
    objects: tuple  # SceneObject tuple, positions current
    limits: ActionLimits = ActionLimits()
    attach_radius: float = DEFAULT_ATTACH_RADIUS
    attached: tuple | None = None  # (object_id, offset Vec3)
    rest_heights: tuple = ()  # ((object_id, z), ...)
    clamp_events: int = 0

    def __post_init__(self):
        if not self.rest_heights:
            object.__setattr__(
                self, "rest_heights", tuple((o.id, o.position.z) for o in self.objects)
            )

    def object_by_id(self, object_id: str) -> SceneObject:
        for o in self.objects:
            if o.id == object_id:
                return o
        raise KeyError(object_id)

    def rest_height(self, object_id: str) -> float:
        for oid, z in self.rest_heights:
            if oid == object_id:
                return z
        raise KeyError(object_id)

    def state(self) -> SystemState:
        return SystemState(self.robot, tuple((o.id, o.position) for o in self.objects))


def step(world: SimWorld, action: Action) -> SimWorld:
    """Advance one control step through the true dynamics."""
    d_pos, d_rot, clamped = world.limits.clamp_arrays(
        action.d_position.as_array(), action.d_rotation.as_array()
    )
    pos = world.robot.position.as_array() + d_pos
    safety_clip = np.clip(pos, SAFETY_LO, SAFETY_HI)
    if not np.array_equal(safety_clip, pos):
        clamped = True
    pos = safety_clip
    rot = np.clip(world.robot.rotation.as_array() + d_rot, -math.pi, math.pi)

    if action.d_gripper > 0.5:
        gripper = 1
    elif action.d_gripper < -0.5:
        gripper = 0
    else:
        gripper = world.robot.gripper

    attached = world.attached
    if gripper == 0:
        attached = None  # release where it is
    elif attached is None:
        best = None
        for obj in world.objects:
            d = float(np.linalg.norm(pos - obj.position.as_array()))
            if d < world.attach_radius and (best is None or d < best[1]):
                best = (obj.id, d)
        if best is not None:
            oid = best[0]
            offset = world.object_by_id(oid).position.as_array() - pos
            attached = (oid, Vec3.from_array(offset))

    objects = []
    for obj in world.objects:
        if attached is not None and obj.id == attached[0]:
            new_pos = pos + attached[1].as_array()
            # Objects never penetrate the table.
            new_pos[2] = max(new_pos[2], world.rest_height(obj.id))
            objects.append(replace(obj, position=Vec3.from_array(new_pos)))
        else:
            objects.append(obj)

    return replace(
        world,
        robot=RobotState(Vec3.from_array(pos), Rotation.from_array(rot), gripper),
        objects=tuple(objects),
        attached=attached,
        clamp_events=world.clamp_events + (1 if clamped else 0),
    )


# -- task definitions --------------------------------------------------------


@dataclass(frozen=True)
class Segment:
    """One scored phase of a task: a named predicate over the rollout."""

    name: str
    weight: float
    predicate: object  # callable(list[SimWorld]) -> bool


@dataclass(frozen=True)
class TaskSpec:
    name: str
    segments: tuple
    sampler: object  # callable(rng) -> SimWorld
    oracle_goals: object  # callable(SimWorld) -> list of goal phases
    constraints: PlacementConstraints
    horizon: int = DEFAULT_HORIZON

    def __post_init__(self):
        total = sum(s.weight for s in self.segments)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"segment weights sum to {total}, expected 1")

    def success(self, trajectory) -> float:
        passed = [s.weight for s in self.segments if s.predicate(trajectory)]
        if len(passed) == len(self.segments):
            return 1.0  # exact, independent of weight rounding
        return sum(passed)

    def segment_table(self, trajectory) -> dict:
        return {s.name: bool(s.predicate(trajectory)) for s in self.segments}


def _min_distance_to_object(trajectory, object_id: str) -> float:
    return min(
        w.robot.position.dist(w.object_by_id(object_id).position) for w in trajectory
    )


def _reach_segment(object_id: str, weight: float, name: str = None) -> Segment:
    return Segment(
        name=name or f"reach_{object_id}",
        weight=weight,
        predicate=lambda tr: _min_distance_to_object(tr, object_id) < REACH_THRESHOLD,
    )


def _lift_segment(object_id: str, weight: float, threshold: float = LIFT_THRESHOLD) -> Segment:
    def lifted(tr):
        return any(
            w.attached is not None
            and w.attached[0] == object_id
            and w.object_by_id(object_id).position.z > threshold
            for w in tr
        )

    return Segment(name=f"lift_{object_id}", weight=weight, predicate=lifted)


def _deliver_segment(object_id: str, goal_fn, weight: float, name: str) -> Segment:
    # Satisfied once the object sits within range of the goal while not
    # held; evaluated on the trajectory suffix so the final placement is
    # what counts.
    def delivered(tr):
        for w in reversed(tr):
            if w.attached is not None and w.attached[0] == object_id:
                return False
            obj = w.object_by_id(object_id)
            goal = goal_fn(tr[0])
            if obj.position.dist(goal) < DELIVER_THRESHOLD:
                return True
        return False

    return Segment(name=name, weight=weight, predicate=delivered)


def _push_segment(object_id: str, center, weight: float) -> Segment:
    def pushed(tr):
        obj = tr[-1].object_by_id(object_id)
        return (
            math.hypot(obj.position.x - center[0], obj.position.y - center[1])
            < PUSH_TARGET_THRESHOLD
        )

    return Segment(name=f"push_{object_id}_to_center", weight=weight, predicate=pushed)


def _scoop_segment(object_id: str, weight: float) -> Segment:
    # A scooping wrist roll of at least SCOOP_ROTATION radians performed
    # near the bowl.
    def scooped(tr):
        for w in tr:
            near = w.robot.position.dist(w.object_by_id(object_id).position) < REACH_THRESHOLD
            if near and abs(w.robot.rotation.rx) >= SCOOP_ROTATION:
                return True
        return False

    return Segment(name="scoop_motion", weight=weight, predicate=scooped)


@dataclass(frozen=True)
class GoalPhase:
    """One leg of a scripted expert: move to a pose, then maybe grip."""

    position: Vec3
    rotation: Rotation = HOME_ROTATION
    gripper: float | None = None  # +1 close, -1 open after reaching


def _world(objects, robot=None) -> SimWorld:
    return SimWorld(
        robot=robot or RobotState(HOME_POSITION, HOME_ROTATION, 0),
        objects=tuple(objects),
    )


def _cube(position) -> SceneObject:
    return SceneObject(
        id="cube", label="red cube", position=position, radius=0.025, color=(200, 40, 40)
    )


def _bowl(position) -> SceneObject:
    return SceneObject(
        id="bowl", label="blue bowl", position=position, radius=0.05, color=(60, 90, 200)
    )


def _bin(position) -> SceneObject:
    return SceneObject(
        id="bin",
        label="gray bin",
        position=position,
        radius=0.05,
        color=(110, 110, 110),
        movable=False,
    )


def _can(position) -> SceneObject:
    return SceneObject(
        id="can",
        label="green can",
        position=position,
        radius=0.03,
        color=(60, 160, 80),
        movable=False,
    )


def _sample_xy(rng, constraints: PlacementConstraints):
    for _ in range(1000):
        xy = rng.uniform(size=2) * (
            np.subtract(constraints.region_hi, constraints.region_lo)
        ) + constraints.region_lo
        if (
            math.hypot(xy[0] - constraints.center[0], xy[1] - constraints.center[1])
            >= constraints.min_center_distance
        ):
            return float(xy[0]), float(xy[1])
    raise OracleFailed("initial-condition sampler exhausted rejection budget")


def _lift_task() -> TaskSpec:
    constraints = PlacementConstraints(region_lo=(-0.3, -0.3), region_hi=(0.3, 0.3))

    def sampler(rng):
        x, y = _sample_xy(rng, constraints)
        return _world([_cube(Vec3(x, y, 0.025))])

    def goals(world):
        cube = world.object_by_id("cube").position
        return [
            GoalPhase(Vec3(cube.x, cube.y, cube.z + 0.10)),
            GoalPhase(cube, gripper=+1.0),
            GoalPhase(Vec3(cube.x, cube.y, 0.24)),
        ]

    return TaskSpec(
        name="lift",
        segments=(_reach_segment("cube", 0.5), _lift_segment("cube", 0.5)),
        sampler=sampler,
        oracle_goals=goals,
        constraints=constraints,
    )


def _push_task() -> TaskSpec:
    # The target bowl starts away from the table's center.
    constraints = PlacementConstraints(
        region_lo=(-0.3, -0.3), region_hi=(0.3, 0.3), min_center_distance=0.15
    )
    center = (0.0, 0.0)

    def sampler(rng):
        x, y = _sample_xy(rng, constraints)
        return _world([_bowl(Vec3(x, y, 0.02))])

    def goals(world):
        bowl = world.object_by_id("bowl").position
        return [
            GoalPhase(Vec3(bowl.x, bowl.y, bowl.z + 0.08)),
            GoalPhase(bowl, gripper=+1.0),
            GoalPhase(Vec3(center[0], center[1], bowl.z), gripper=-1.0),
            GoalPhase(Vec3(center[0], center[1], bowl.z + 0.10)),
        ]

    return TaskSpec(
        name="push",
        segments=(_reach_segment("bowl", 0.5), _push_segment("bowl", center, 0.5)),
        sampler=sampler,
        oracle_goals=goals,
        constraints=constraints,
    )


def _pick_place_task() -> TaskSpec:
    constraints = PlacementConstraints(region_lo=(-0.3, -0.3), region_hi=(0.25, 0.25))
    bin_pos = Vec3(0.32, 0.32, 0.02)

    def sampler(rng):
        x, y = _sample_xy(rng, constraints)
        return _world([_cube(Vec3(x, y, 0.025)), _bin(bin_pos)])

    def goals(world):
        cube = world.object_by_id("cube").position
        return [
            GoalPhase(Vec3(cube.x, cube.y, cube.z + 0.10)),
            GoalPhase(cube, gripper=+1.0),
            GoalPhase(Vec3(cube.x, cube.y, 0.20)),
            GoalPhase(Vec3(bin_pos.x, bin_pos.y, 0.20)),
            GoalPhase(Vec3(bin_pos.x, bin_pos.y, 0.05), gripper=-1.0),
            GoalPhase(Vec3(bin_pos.x, bin_pos.y, 0.18)),
        ]

    return TaskSpec(
        name="pick-place",
        segments=(
            _reach_segment("cube", 1 / 3),
            _lift_segment("cube", 1 / 3),
            _deliver_segment("cube", lambda w0: Vec3(bin_pos.x, bin_pos.y, 0.05), 1 / 3, "deliver_cube"),
        ),
        sampler=sampler,
        oracle_goals=goals,
        constraints=constraints,
    )


def _scoop_task() -> TaskSpec:
    constraints = PlacementConstraints(region_lo=(-0.25, -0.25), region_hi=(0.25, 0.25))

    def sampler(rng):
        x, y = _sample_xy(rng, constraints)
        return _world([_bowl(Vec3(x, y, 0.02))])

    def goals(world):
        bowl = world.object_by_id("bowl").position
        return [
            GoalPhase(Vec3(bowl.x, bowl.y, bowl.z + 0.10)),
            GoalPhase(Vec3(bowl.x, bowl.y, bowl.z + 0.03)),
            GoalPhase(Vec3(bowl.x, bowl.y, bowl.z + 0.03), rotation=Rotation(-1.2, 0.0, 0.0)),
            GoalPhase(Vec3(bowl.x, bowl.y, bowl.z + 0.12), rotation=Rotation(-1.2, 0.0, 0.0)),
        ]

    return TaskSpec(
        name="scoop",
        segments=(_reach_segment("bowl", 0.5), _scoop_segment("bowl", 0.5)),
        sampler=sampler,
        oracle_goals=goals,
        constraints=constraints,
    )


def _long_horizon_task() -> TaskSpec:
    # Table setting: push the bowl to the center, then pick the can and
    # place it next to the bowl. Subtasks weigh 50% each: 25/25 for the
    # push segments, a third of 50% for each pick-place segment.
    constraints = PlacementConstraints(
        region_lo=(-0.28, -0.28), region_hi=(0.28, 0.1), min_center_distance=0.12
    )
    can_pos = Vec3(0.34, 0.3, 0.03)
    center = (0.0, 0.0)

    def sampler(rng):
        x, y = _sample_xy(rng, constraints)
        return _world([_bowl(Vec3(x, y, 0.02)), _can(can_pos)])

    def can_goal(_w0):
        return Vec3(center[0] + 0.12, center[1], 0.05)

    def goals(world):
        bowl = world.object_by_id("bowl").position
        goal = can_goal(world)
        return [
            GoalPhase(Vec3(bowl.x, bowl.y, bowl.z + 0.08)),
            GoalPhase(bowl, gripper=+1.0),
            GoalPhase(Vec3(center[0], center[1], bowl.z), gripper=-1.0),
            GoalPhase(Vec3(center[0], center[1], bowl.z + 0.12)),
            GoalPhase(Vec3(can_pos.x, can_pos.y, can_pos.z + 0.10)),
            GoalPhase(can_pos, gripper=+1.0),
            GoalPhase(Vec3(can_pos.x, can_pos.y, 0.20)),
            GoalPhase(Vec3(goal.x, goal.y, 0.20)),
            GoalPhase(Vec3(goal.x, goal.y, goal.z), gripper=-1.0),
            GoalPhase(Vec3(goal.x, goal.y, 0.18)),
        ]

    return TaskSpec(
        name="long-horizon",
        segments=(
            _reach_segment("bowl", 0.25),
            _push_segment("bowl", center, 0.25),
            _reach_segment("can", 0.5 / 3),
            _lift_segment("can", 0.5 / 3, threshold=0.12),
            _deliver_segment("can", can_goal, 0.5 / 3, "place_can"),
        ),
        sampler=sampler,
        oracle_goals=goals,
        constraints=constraints,
        horizon=450,
    )


_TASKS = {
    t.name: t
    for t in (
        _lift_task(),
        _push_task(),
        _pick_place_task(),
        _scoop_task(),
        _long_horizon_task(),
    )
}


def get_task(name: str) -> TaskSpec:
    try:
        return _TASKS[name]
    except KeyError:
        raise KeyError(f"unknown task {name!r}; known: {sorted(_TASKS)}") from None


def task_names():
    return sorted(_TASKS)


def base_scene_for_task(task: TaskSpec, camera, seed: int = 0):
    """Initial scene used as the template for synthesized variations."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xBA5E)))
    world = task.sampler(rng)
    return make_scene(f"{task.name}", camera, world.objects, world.robot)


def world_from_scene(scene) -> SimWorld:
    return _world(scene.objects, robot=scene.robot_state)


# -- scripted expert ---------------------------------------------------------


def _drive_to(world: SimWorld, goal: GoalPhase, sink, max_steps: int = 400):
    """Step toward one goal pose, emitting (state, action) pairs."""
    for _ in range(max_steps):
        pos = world.robot.position.as_array()
        rot = world.robot.rotation.as_array()
        dp = goal.position.as_array() - pos
        dr = goal.rotation.as_array() - rot
        if np.abs(dp).max() < 1e-9 and np.abs(dr).max() < 1e-9:
            return world
        action = Action(
            Vec3.from_array(np.clip(dp, -ORACLE_STEP, ORACLE_STEP)),
            Rotation.from_array(np.clip(dr, -ORACLE_ROT_STEP, ORACLE_ROT_STEP)),
            0.0,
        )
        sink(world, action)
        world = step(world, action)
    raise OracleFailed(f"expert failed to reach {goal.position} in {max_steps} steps")


def oracle_demo(task: TaskSpec, world: SimWorld, seed: int = 0):
    """Run the scripted expert from the given initial world.

    Returns (pairs, trajectory); the expert must score a perfect success
    on its own rollout, anything else is a hard failure. The controller
    itself is deterministic; ``seed`` exists so stochastic experts can
    slot in behind the same signature.
    """
    start = world
    pairs = []

    def sink(w, a):
        pairs.append((w.state(), a))

    for goal in task.oracle_goals(world):
        world = _drive_to(world, goal, sink)
        if goal.gripper is not None:
            action = Action(Vec3(0, 0, 0), Rotation(0, 0, 0), goal.gripper)
            for _ in range(ORACLE_GRIP_DWELL):
                sink(world, action)
                world = step(world, action)

    pairs.append((world.state(), Action.zero()))

    # Rebuild the trajectory by replaying the recorded actions from the
    # initial world; oracle demos are dynamics-consistent by construction.
    trajectory = [start]
    for _, action in pairs[:-1]:
        trajectory.append(step(trajectory[-1], action))

    score = task.success(trajectory)
    if score != 1.0:
        raise OracleFailed(f"expert scored {score} on {task.name}")
    return pairs, trajectory


def oracle_dataset(task: TaskSpec, n_demos: int, seed: int) -> DemoDataset:
    """Collect n scripted demonstrations from seeded initial conditions."""
    dataset = DemoDataset(provenance=PROVENANCE_ORACLE)
    seeds = np.random.SeedSequence((seed, 0x04AC1E)).spawn(n_demos)
    for s in seeds:
        world = task.sampler(np.random.default_rng(s))
        pairs, _ = oracle_demo(task, world)
        dataset.extend(pairs)
    return dataset


# -- rollout and evaluation --------------------------------------------------


@dataclass
class RolloutResult:
    trajectory: list
    success: float
    segments: dict
    steps: int


def rollout(policy_fn, task: TaskSpec, world: SimWorld, horizon: int | None = None) -> RolloutResult:
    """Closed-loop execution of a policy through the true dynamics.

    ``policy_fn`` maps SystemState to Action. Stops early once every
    segment is satisfied.
    """
    horizon = horizon or task.horizon
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    trajectory = [world]
    for _ in range(horizon):
        action = policy_fn(world.state())
        world = step(world, action)
        trajectory.append(world)
        if task.success(trajectory) == 1.0:
            break
    return RolloutResult(
        trajectory=trajectory,
        success=task.success(trajectory),
        segments=task.segment_table(trajectory),
        steps=len(trajectory) - 1,
    )


@dataclass
class EvalReport:
    task: str
    mean_success: float
    stderr: float
    per_instance: list  # dicts: instance, seed-derived state, success, segments

    def to_records(self):
        yield {
            "kind": "report",
            "report": "evaluation_summary",
            "task": self.task,
            "mean_success": self.mean_success,
            "stderr": self.stderr,
            "n_instances": len(self.per_instance),
        }
        for row in self.per_instance:
            yield {"kind": "report", "report": "evaluation_instance", "task": self.task, **row}


def evaluate(
    policy_fn, task: TaskSpec, n_instances: int, seed: int, horizon: int | None = None
) -> EvalReport:
    """Mean success over seeded initial conditions, with a segment table."""
    if n_instances < 1:
        raise ValueError("n_instances must be >= 1")
    successes = []
    rows = []
    seeds = np.random.SeedSequence((seed, 0xE7A1)).spawn(n_instances)
    for i, s in enumerate(seeds):
        world = task.sampler(np.random.default_rng(s))
        result = rollout(policy_fn, task, world, horizon=horizon)
        successes.append(result.success)
        rows.append(
            {
                "instance": i,
                "success": result.success,
                "segments": result.segments,
                "steps": result.steps,
            }
        )
    arr = np.array(successes)
    stderr = float(arr.std(ddof=1) / math.sqrt(len(arr))) if len(arr) > 1 else 0.0
    return EvalReport(
        task=task.name,
        mean_success=float(arr.mean()),
        stderr=stderr,
        per_instance=rows,
    )
