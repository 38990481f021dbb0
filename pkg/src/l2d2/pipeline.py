"""End-to-end orchestration: camera, mapping, drawings, policies, reports.

Everything is seeded and single-threaded; running the same configuration
twice yields byte-identical artifacts, and the manifest records a hash
DAG from inputs to the final policy.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import nn, records, sim
from .compile import compile_dataset
from .mapping import (
    BoxWorkspace,
    DEFAULT_MAP_FINETUNE,
    DEFAULT_MAP_TRAIN,
    generate_calibration,
    train_mapping,
    workspace_cloud,
)
from .placement import info_loss, optimal_placement
from .policy import (
    DEFAULT_BC_FINETUNE,
    DEFAULT_BC_TRAIN,
    GroundingConfig,
    GroundingResult,
    Policy,
    ground_policy,
    policy_fn,
    save_policy,
    train_bc,
)
from .scenes import write_scene_bundle
from .synthetic import DEFAULT_NOISE_PX, synthetic_drawing
from .types import DEFAULT_WAYPOINTS


@dataclass(frozen=True)
class PipelineConfig:
    """Every knob of a full run; defaults mirror the experiment budget of
    50 drawings plus 10 oracle demonstrations."""

    task: str = "lift"
    n_drawings: int = 50
    n_oracle: int = 10
    n_waypoints: int = DEFAULT_WAYPOINTS
    noise_px: float = DEFAULT_NOISE_PX
    seed: int = 0
    camera_distance: float = 1.5
    calibration_count: int = 5000
    cloud_count: int = 2000
    eval_instances: int = 10
    eval_seed: int = 1
    map_train: nn.TrainConfig = DEFAULT_MAP_TRAIN
    map_finetune: nn.TrainConfig = DEFAULT_MAP_FINETUNE
    bc_train: nn.TrainConfig = DEFAULT_BC_TRAIN
    bc_finetune: nn.TrainConfig = DEFAULT_BC_FINETUNE
    write_images: bool = True

    def to_record(self) -> dict:
        return {
            "task": self.task,
            "n_drawings": self.n_drawings,
            "n_oracle": self.n_oracle,
            "n_waypoints": self.n_waypoints,
            "noise_px": self.noise_px,
            "seed": self.seed,
            "camera_distance": self.camera_distance,
            "calibration_count": self.calibration_count,
            "cloud_count": self.cloud_count,
            "eval_instances": self.eval_instances,
            "eval_seed": self.eval_seed,
            "map_train": self.map_train.to_record(),
            "map_finetune": self.map_finetune.to_record(),
            "bc_train": self.bc_train.to_record(),
            "bc_finetune": self.bc_finetune.to_record(),
        }


def small_config(**overrides) -> PipelineConfig:
    """A fast configuration for tests and smoke runs."""
    base = PipelineConfig(
        n_drawings=4,
        n_oracle=2,
        calibration_count=400,
        cloud_count=200,
        eval_instances=2,
        map_train=replace(DEFAULT_MAP_TRAIN, epochs=60),
        map_finetune=replace(DEFAULT_MAP_FINETUNE, epochs=20),
        # Gentler than the full-budget defaults: with only a handful of
        # drawings the momentum term can resonate at the production rate.
        bc_train=replace(DEFAULT_BC_TRAIN, epochs=40, learning_rate=0.005),
        bc_finetune=replace(DEFAULT_BC_FINETUNE, epochs=10, learning_rate=0.005),
        write_images=False,
    )
    return replace(base, **overrides)


@dataclass
class PipelineResult:
    config: PipelineConfig
    camera: object
    camera_loss: float
    mapping: object  # MappingResult
    scenes: dict
    drawings: list
    reconstructed: object  # DemoDataset from the pre-grounding mapping
    drawings_only: Policy
    oracle: object  # DemoDataset
    grounding: GroundingResult
    eval_drawings_only: sim.EvalReport
    eval_grounded: sim.EvalReport
    artifacts: dict = field(default_factory=dict)  # name -> sha256


class ProgressSink:
    """Collects coarse progress events; the server streams these."""

    def __init__(self, callback=None):
        self.callback = callback

    def emit(self, stage: str, **payload):
        if self.callback is not None:
            self.callback({"stage": stage, **payload})


def run_pipeline(
    cfg: PipelineConfig, out_dir, progress: ProgressSink | None = None
) -> PipelineResult:
    """Execute the whole flow and persist every artifact under out_dir."""
    progress = progress or ProgressSink()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    task = sim.get_task(cfg.task)

    # Camera placement over the task-agnostic working region.
    progress.emit("calibrate", message="placing camera")
    workspace = BoxWorkspace()
    cloud = workspace_cloud(workspace, cfg.cloud_count, seed=derive_seed(cfg.seed, 1))
    camera = optimal_placement(cloud, distance=cfg.camera_distance)
    camera_loss = info_loss(camera, cloud)
    records.write_records(out / "camera.l2d2", [camera.to_record()])

    # Task-agnostic pixel-to-position mapping.
    progress.emit("calibrate", message="training mapping")
    calib = generate_calibration(
        camera, workspace, cfg.calibration_count, seed=derive_seed(cfg.seed, 2)
    )
    mapping_result = train_mapping(calib, replace(cfg.map_train, seed=derive_seed(cfg.seed, 3)))
    _save_model(out / "fmap.model", mapping_result.net, "mapping")

    # Scene corpus and synthetic user drawings.
    progress.emit("collect", message="synthesizing scenes")
    base = sim.base_scene_for_task(task, camera, seed=derive_seed(cfg.seed, 4))
    scene_list = _synthesize(task, base, cfg)
    scenes = {s.scene_id: s for s in scene_list}
    if cfg.write_images:
        write_scene_bundle(out / "scenes", scene_list)
    else:
        scenes_dir = out / "scenes"
        scenes_dir.mkdir(parents=True, exist_ok=True)
        records.write_records(
            scenes_dir / "scenes.l2d2", [s.to_record() for s in scene_list]
        )

    progress.emit("collect", message="drawing")
    drawings = [
        synthetic_drawing(
            task,
            scene,
            n_waypoints=cfg.n_waypoints,
            noise_px=cfg.noise_px,
            seed=derive_seed(cfg.seed, 5, i),
        )
        for i, scene in enumerate(scene_list)
    ]
    records.write_drawings(out / "drawings.l2d2", drawings)

    # Compile and train the drawings-only policy.
    progress.emit("compile", message="reconstructing drawings")
    reconstructed, _, skipped = compile_dataset(drawings, scenes, mapping_result.net)
    if skipped:
        progress.emit("compile", message=f"skipped {len(skipped)} drawings")
    records.write_dataset(out / "reconstructed.l2d2", reconstructed)

    progress.emit("train", message="behavior cloning on drawings")
    drawings_only, _ = train_bc(
        reconstructed, replace(cfg.bc_train, seed=derive_seed(cfg.seed, 6))
    )
    save_policy(out / "policy_drawings_only.model", drawings_only)

    # Oracle demonstrations and the grounding tail.
    progress.emit("ground", message="collecting oracle demonstrations")
    oracle = sim.oracle_dataset(task, cfg.n_oracle, seed=derive_seed(cfg.seed, 7))
    records.write_dataset(out / "oracle.l2d2", oracle)

    progress.emit("ground", message="two-stage grounding")
    grounding = ground_policy(
        drawings,
        scenes,
        mapping_result.net,
        oracle,
        camera,
        cfgs=GroundingConfig(
            map_finetune=replace(cfg.map_finetune, seed=derive_seed(cfg.seed, 8)),
            phase1=replace(cfg.bc_train, seed=derive_seed(cfg.seed, 9)),
            phase2=replace(cfg.bc_finetune, seed=derive_seed(cfg.seed, 10)),
        ),
    )
    _save_model(out / "fmap_ft.model", grounding.mapping_net, "mapping")
    records.write_dataset(out / "recompiled.l2d2", grounding.recompiled)
    save_policy(out / "policy_intermediate.model", grounding.intermediate)
    save_policy(out / "policy_grounded.model", grounding.grounded)

    # Evaluation of both endpoints of the ablation.
    progress.emit("evaluate", message="rolling out policies")
    eval_do = sim.evaluate(
        policy_fn(drawings_only), task, cfg.eval_instances, cfg.eval_seed
    )
    eval_gr = sim.evaluate(
        policy_fn(grounding.grounded), task, cfg.eval_instances, cfg.eval_seed
    )
    records.write_records(out / "eval_drawings_only.report", eval_do.to_records())
    records.write_records(out / "eval_grounded.report", eval_gr.to_records())

    artifacts = _hash_artifacts(out)
    manifest = [
        {"kind": "manifest", "entry": "config", "config": cfg.to_record()},
        {
            "kind": "manifest",
            "entry": "camera",
            "info_loss": camera_loss,
            "sha256": artifacts["camera.l2d2"],
        },
        {
            "kind": "manifest",
            "entry": "mapping",
            "train_rmse": mapping_result.train_rmse,
            "holdout_rmse": mapping_result.holdout_rmse,
            "sha256": artifacts["fmap.model"],
        },
    ]
    for phase in grounding.manifest:
        manifest.append({"kind": "manifest", "entry": "grounding_phase", **phase})
    manifest.append(
        {
            "kind": "manifest",
            "entry": "evaluation",
            "drawings_only_mean": eval_do.mean_success,
            "grounded_mean": eval_gr.mean_success,
        }
    )
    manifest.append(
        {
            "kind": "manifest",
            "entry": "artifacts",
            "sha256": {k: v for k, v in sorted(artifacts.items())},
        }
    )
    records.write_records(out / "manifest.l2d2", manifest)

    progress.emit("done", message="pipeline complete")
    return PipelineResult(
        config=cfg,
        camera=camera,
        camera_loss=camera_loss,
        mapping=mapping_result,
        scenes=scenes,
        drawings=drawings,
        reconstructed=reconstructed,
        drawings_only=drawings_only,
        oracle=oracle,
        grounding=grounding,
        eval_drawings_only=eval_do,
        eval_grounded=eval_gr,
        artifacts=artifacts,
    )


def _synthesize(task, base, cfg: PipelineConfig):
    from .scenes import synthesize_scenes

    return synthesize_scenes(
        base, cfg.n_drawings, seed=derive_seed(cfg.seed, 11), constraints=task.constraints
    )


def derive_seed(base: int, *tags) -> int:
    ss = np.random.SeedSequence((base, *tags))
    return int(ss.generate_state(1)[0])


def _save_model(path, net, role: str) -> None:
    rec = net.to_record()
    rec["role"] = role
    records.write_records(path, [rec])


def _hash_artifacts(out: Path) -> dict:
    exclude = {"manifest.l2d2"}
    hashes = {}
    for p in sorted(out.rglob("*")):
        if p.is_file() and p.name not in exclude:
            hashes[str(p.relative_to(out))] = records.file_sha256(p)
    return hashes
