"""Behavior cloning, two-stage grounding, and closed-loop action.

The grounded pipeline never merges the reconstructed and oracle datasets:
the mapping is fine-tuned on the oracle states, the drawings are
recompiled with the improved mapping, the policy trains on that corpus,
and only then fine-tunes on the oracle pairs. The phase order and the
parameter hash after each phase go into the run manifest so the sequence
is auditable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .compile import compile_dataset
from .errors import NoGroundingData, NoTrainingData, ShapeError
from .mapping import finetune_mapping
from .types import (
    Action,
    ActionLimits,
    DemoDataset,
    PROVENANCE_ORACLE,
    Rotation,
    SystemState,
    Vec3,
)

GRIPPER_THRESHOLD = 0.5

DEFAULT_BC_TRAIN = nn.TrainConfig(
    learning_rate=0.02, epochs=3000, batch_size=64, seed=0, momentum=0.9,
    weight_decay=1e-4,
)
# Oracle fine-tuning: same learning rate, far fewer epochs (enough to
# inject contact behavior without erasing the drawings' diversity), and
# plain SGD; on a ten-demo dataset the momentum term resonates and can
# blow the fine-tune up entirely.
DEFAULT_BC_FINETUNE = nn.TrainConfig(
    learning_rate=0.02, epochs=500, batch_size=64, seed=0, momentum=0.0,
    weight_decay=1e-4,
)


def featurize(state: SystemState, object_ids: tuple) -> np.ndarray:
    """State vector: robot pose + per object absolute and relative position.

    The end-effector-relative offsets are the minimal cue for reach
    generalization across object placements.
    """
    robot = state.robot
    parts = [
        robot.position.as_array(),
        robot.rotation.as_array(),
        [float(robot.gripper)],
    ]
    for oid in object_ids:
        pos = state.object_position(oid)
        parts.append(pos.as_array())
        parts.append(pos.as_array() - robot.position.as_array())
    return np.concatenate(parts)


def action_to_vector(action: Action) -> np.ndarray:
    return action.as_array()


@dataclass(frozen=True)
class Policy:
    """A trained behavior-cloning policy with its input contract."""

    net: nn.Approximator
    object_ids: tuple
    limits: ActionLimits = ActionLimits()

    def to_records(self):
        rec = self.net.to_record()
        rec["role"] = "policy"
        rec["object_ids"] = list(self.object_ids)
        rec["limits"] = self.limits.to_record()
        yield rec

    @classmethod
    def from_record(cls, rec: dict) -> "Policy":
        return cls(
            net=nn.Approximator.from_record(rec),
            object_ids=tuple(rec["object_ids"]),
            limits=ActionLimits.from_record(rec["limits"]),
        )

    def param_hash(self) -> str:
        return self.net.param_hash()


def _dataset_features(data: DemoDataset, object_ids: tuple):
    X = np.array([featurize(s, object_ids) for s, _ in data.pairs])
    Y = np.array([action_to_vector(a) for _, a in data.pairs])
    return X, Y


def _object_ids_of(data: DemoDataset) -> tuple:
    ids = tuple(oid for oid, _ in data.pairs[0][0].objects)
    for s, _ in data.pairs:
        if tuple(oid for oid, _ in s.objects) != ids:
            raise ShapeError("object ordering differs between states in the dataset")
    return ids


def _canonical_order(data: DemoDataset):
    """Sort pairs by their serialized form.

    Training shuffles are seed-driven, so sorting first makes the fit
    independent of the order pairs arrived in.
    """
    keys = [
        json.dumps([s.to_record(), a.to_record()], sort_keys=True)
        for s, a in data.pairs
    ]
    return [data.pairs[i] for i in np.argsort(keys, kind="stable")]


# Per-block floors on the data-driven action standardization. A drawing
# corpus can leave a dimension almost constant (a top-down camera hides
# lift deltas entirely); without a floor the oracle fine-tuning targets
# for that dimension standardize into ~20 sigma outliers and blow the
# second phase up. Dimensions that stay constant in BOTH phases keep a
# tiny std and stay frozen, which is exactly what we want.
ACTION_STD_FLOORS = np.array([0.004] * 3 + [nn.STD_FLOOR] * 3 + [0.1])


def train_bc(
    data: DemoDataset,
    cfg: nn.TrainConfig = DEFAULT_BC_TRAIN,
    limits: ActionLimits | None = None,
    warm_start: Policy | None = None,
) -> tuple:
    """Fit a policy on state-action pairs; returns (Policy, loss_curve)."""
    if len(data) == 0:
        raise NoTrainingData("behavior cloning needs a non-empty dataset")
    object_ids = _object_ids_of(data)
    ordered = DemoDataset(
        pairs=_canonical_order(data), provenance=data.provenance, boundaries=[0]
    )
    X, Y = _dataset_features(ordered, object_ids)
    if warm_start is not None:
        if warm_start.object_ids != object_ids:
            raise ShapeError(
                f"warm start expects objects {warm_start.object_ids}, data has {object_ids}"
            )
        net = warm_start.net
    else:
        from dataclasses import replace as _replace

        net = nn.initialize(nn.policy_architecture(len(object_ids)), seed=cfg.seed)
        net = _replace(
            net,
            x_mean=X.mean(axis=0),
            x_std=np.maximum(X.std(axis=0), nn.STD_FLOOR),
            y_mean=Y.mean(axis=0),
            y_std=np.maximum(Y.std(axis=0), ACTION_STD_FLOORS),
        )
    result = nn.fit(net, (X, Y), cfg)
    policy = Policy(
        net=result.net,
        object_ids=object_ids,
        limits=limits or (warm_start.limits if warm_start else ActionLimits()),
    )
    return policy, result.loss_curve


def act(policy: Policy, state: SystemState) -> Action:
    """Deterministic regression head with per-dimension clamping.

    The gripper channel is trained as a real value and discretized here:
    above +0.5 closes, below -0.5 opens, otherwise hold.
    """
    ids = tuple(oid for oid, _ in state.objects)
    if ids != policy.object_ids:
        raise ShapeError(f"state objects {ids} != policy contract {policy.object_ids}")
    out = nn.forward(policy.net, featurize(state, policy.object_ids))
    d_pos = np.clip(out[0:3], -policy.limits.position, policy.limits.position)
    d_rot = np.clip(out[3:6], -policy.limits.rotation, policy.limits.rotation)
    if out[6] > GRIPPER_THRESHOLD:
        d_g = 1.0
    elif out[6] < -GRIPPER_THRESHOLD:
        d_g = -1.0
    else:
        d_g = 0.0
    return Action(Vec3.from_array(d_pos), Rotation.from_array(d_rot), d_g)


def policy_fn(policy: Policy):
    return lambda state: act(policy, state)


@dataclass(frozen=True)
class GroundingConfig:
    map_finetune: nn.TrainConfig = None
    phase1: nn.TrainConfig = DEFAULT_BC_TRAIN
    phase2: nn.TrainConfig = DEFAULT_BC_FINETUNE


@dataclass
class GroundingResult:
    """Everything the two-stage grounding run produced."""

    mapping_net: nn.Approximator  # fine-tuned pixel-to-position net
    recompiled: DemoDataset  # drawings recompiled with the new mapping
    intermediate: Policy  # trained on the recompiled drawings
    grounded: Policy  # after fine-tuning on the oracle pairs
    manifest: list = field(default_factory=list)
    mapping_report: object = None
    compile_reports: list = field(default_factory=list)


def ground_policy(
    drawings,
    scenes: dict,
    mapping_net: nn.Approximator,
    oracle: DemoDataset,
    camera,
    cfgs: GroundingConfig | None = None,
    limits: ActionLimits | None = None,
) -> GroundingResult:
    """Full grounding tail: refine the mapping, recompile, retrain, refine.

    The two policy phases are sequential by design; merging the datasets
    would bias the policy toward the far larger drawing corpus and drown
    out the contact-rich oracle pairs.
    """
    if oracle.provenance != PROVENANCE_ORACLE or len(oracle) == 0:
        raise NoGroundingData("grounding requires non-empty oracle demonstrations")
    cfgs = cfgs or GroundingConfig()
    manifest = []

    ft_kwargs = {} if cfgs.map_finetune is None else {"cfg": cfgs.map_finetune}
    ft = finetune_mapping(mapping_net, oracle, camera, **ft_kwargs)
    manifest.append(
        {
            "phase": "finetune_mapping",
            "order": 0,
            "param_hash": ft.net.param_hash(),
            "rmse_before": ft.rmse_before,
            "rmse_after": ft.rmse_after,
        }
    )

    recompiled, compile_reports, skipped = compile_dataset(
        drawings, scenes, ft.net, limits=limits
    )
    if len(recompiled) == 0:
        raise NoTrainingData("no drawing compiled successfully")
    manifest.append(
        {
            "phase": "recompile_drawings",
            "order": 1,
            "trajectories": recompiled.n_trajectories(),
            "pairs": len(recompiled),
            "skipped": len(skipped),
        }
    )

    intermediate, curve1 = train_bc(recompiled, cfgs.phase1, limits=limits)
    manifest.append(
        {
            "phase": "train_on_recompiled",
            "order": 2,
            "param_hash": intermediate.param_hash(),
            "final_loss": curve1[-1] if curve1 else None,
        }
    )

    grounded, curve2 = train_bc(oracle, cfgs.phase2, warm_start=intermediate)
    manifest.append(
        {
            "phase": "finetune_on_oracle",
            "order": 3,
            "param_hash": grounded.param_hash(),
            "final_loss": curve2[-1] if curve2 else None,
        }
    )

    return GroundingResult(
        mapping_net=ft.net,
        recompiled=recompiled,
        intermediate=intermediate,
        grounded=grounded,
        manifest=manifest,
        mapping_report=ft,
        compile_reports=compile_reports,
    )


def save_policy(path, policy: Policy) -> None:
    from . import records

    records.write_records(path, policy.to_records())


def load_policy(path) -> Policy:
    from . import records

    for rec in records.read_records(path):
        if rec["kind"] == "model" and rec.get("role") == "policy":
            return Policy.from_record(rec)
    raise NoTrainingData(f"no policy record in {path}")
