"""Command-line interface; mirrors the HTTP API for headless use."""

from __future__ import annotations

import json
import sys
import time
from dataclasses import replace
from pathlib import Path

import click
import numpy as np

from . import nn, records, sim
from .errors import L2D2Error
from .mapping import (
    BoxWorkspace,
    CurvedSheetWorkspace,
    DEFAULT_MAP_TRAIN,
    PlanarWorkspace,
    generate_calibration,
    load_model,
    save_mapping,
    train_mapping,
    workspace_cloud,
    workspace_from_record,
)
from .pipeline import PipelineConfig, ProgressSink, run_pipeline
from .placement import info_loss, optimal_placement, sweep_losses
from .policy import (
    DEFAULT_BC_TRAIN,
    ground_policy,
    load_policy,
    policy_fn,
    save_policy,
    train_bc,
)
from .scenes import read_scene_bundle


def _load_workspace(spec: str):
    builtin = {
        "box": BoxWorkspace(),
        "planar": PlanarWorkspace(),
        "curved": CurvedSheetWorkspace(),
    }
    if spec in builtin:
        return builtin[spec]
    for rec in records.read_records(spec):
        if rec["kind"] == "workspace":
            return workspace_from_record(rec)
    raise click.ClickException(f"no workspace record in {spec!r}")


def _load_camera(path: str):
    from .camera import CameraConfig

    for rec in records.read_records(path):
        if rec["kind"] == "camera":
            return CameraConfig.from_record(rec)
    raise click.ClickException(f"no camera record in {path!r}")


def _train_overrides(cfg: nn.TrainConfig, lr, epochs, batch_size, seed):
    updates = {}
    if lr is not None:
        updates["learning_rate"] = lr
    if epochs is not None:
        updates["epochs"] = epochs
    if batch_size is not None:
        updates["batch_size"] = batch_size
    if seed is not None:
        updates["seed"] = seed
    return replace(cfg, **updates)


@click.group()
def main():
    """Teach manipulation by drawing on scene images."""


# -- calibrate ----------------------------------------------------------------


@main.group()
def calibrate():
    """Camera placement and pixel-to-position mapping."""


@calibrate.command("place")
@click.option("--workspace", required=True, help="box | planar | curved | record file")
@click.option("--distance", type=float, default=1.5, show_default=True)
@click.option("--sweep", "sweep_n", type=int, default=0, help="brute-force oracle size")
@click.option("--cloud-points", type=int, default=2000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(), default=None, help="camera record file")
def calibrate_place(workspace, distance, sweep_n, cloud_points, seed, out):
    """Compute the loss-minimizing camera placement for a workspace."""
    ws = _load_workspace(workspace)
    cloud = workspace_cloud(ws, cloud_points, seed=seed)
    camera = optimal_placement(cloud, distance=distance)
    loss = info_loss(camera, cloud)
    click.echo(f"achieved info loss: {loss:.6f}")
    if sweep_n:
        sweep = sweep_losses(cloud.points, sweep_n, seed=seed + 1)
        click.echo(f"sweep best of {sweep_n} random orientations: {sweep.min():.6f}")
    if out:
        records.write_records(out, [camera.to_record()])
        click.echo(f"wrote {out}")


@calibrate.command("map")
@click.option("--camera", "camera_path", required=True, type=click.Path(exists=True))
@click.option("--workspace", required=True)
@click.option("-n", "count", type=int, default=5000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--lr", type=float, default=None)
@click.option("--epochs", type=int, default=None)
@click.option("--batch-size", type=int, default=None)
@click.option("--out", required=True, type=click.Path())
def calibrate_map(camera_path, workspace, count, seed, lr, epochs, batch_size, out):
    """Generate a calibration set and train the reconstruction network."""
    camera = _load_camera(camera_path)
    ws = _load_workspace(workspace)
    calib = generate_calibration(camera, ws, count, seed=seed)
    cfg = _train_overrides(DEFAULT_MAP_TRAIN, lr, epochs, batch_size, seed)
    result = train_mapping(calib, cfg)
    save_mapping(out, result)
    click.echo(
        f"train RMSE {result.train_rmse * 1000:.2f} mm, "
        f"holdout RMSE {result.holdout_rmse * 1000:.2f} mm -> {out}"
    )


# -- ground -------------------------------------------------------------------


@main.group()
def ground():
    """Grounding with oracle demonstrations."""


@ground.command("map")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--oracle", "oracle_path", required=True, type=click.Path(exists=True))
@click.option("--camera", "camera_path", required=True, type=click.Path(exists=True))
@click.option("--lr", type=float, default=None)
@click.option("--epochs", type=int, default=None)
@click.option("--seed", type=int, default=0)
@click.option("--out", required=True, type=click.Path())
def ground_map(model_path, oracle_path, camera_path, lr, epochs, seed, out):
    """Fine-tune a mapping on the states of oracle demonstrations."""
    from .mapping import DEFAULT_MAP_FINETUNE, finetune_mapping

    net = load_model(model_path)
    oracle = records.read_dataset(oracle_path)
    camera = _load_camera(camera_path)
    cfg = _train_overrides(DEFAULT_MAP_FINETUNE, lr, epochs, None, seed)
    try:
        result = finetune_mapping(net, oracle, camera, cfg)
    except L2D2Error as e:
        raise click.ClickException(str(e))
    rec = result.net.to_record()
    rec["role"] = "mapping"
    records.write_records(out, [rec])
    click.echo(
        f"task-region RMSE {result.rmse_before * 1000:.2f} -> "
        f"{result.rmse_after * 1000:.2f} mm (holdout "
        f"{result.holdout_rmse_before * 1000:.2f} -> {result.holdout_rmse_after * 1000:.2f}) -> {out}"
    )


# -- train --------------------------------------------------------------------


@main.group()
def train():
    """Policy training."""


@train.command("bc")
@click.option("--data", "data_path", required=True, type=click.Path(exists=True))
@click.option("--lr", type=float, default=None)
@click.option("--epochs", type=int, default=None)
@click.option("--batch-size", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--out", required=True, type=click.Path())
def train_bc_cmd(data_path, lr, epochs, batch_size, seed, out):
    """Behavior cloning on a state-action dataset."""
    dataset = records.read_dataset(data_path)
    cfg = _train_overrides(DEFAULT_BC_TRAIN, lr, epochs, batch_size, seed)
    try:
        policy, curve = train_bc(dataset, cfg)
    except L2D2Error as e:
        raise click.ClickException(str(e))
    save_policy(out, policy)
    click.echo(f"final loss {curve[-1]:.6f} over {cfg.epochs} epochs -> {out}")


@train.command("ground")
@click.option("--drawings", "drawings_path", required=True, type=click.Path(exists=True))
@click.option("--scenes", "scenes_dir", required=True, type=click.Path(exists=True))
@click.option("--oracle", "oracle_path", required=True, type=click.Path(exists=True))
@click.option("--fmap", "fmap_path", required=True, type=click.Path(exists=True))
@click.option("--camera", "camera_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--manifest", "manifest_path", type=click.Path(), default=None)
def train_ground(drawings_path, scenes_dir, oracle_path, fmap_path, camera_path, out, manifest_path):
    """Two-stage grounding: refine mapping, recompile, retrain, refine."""
    drawings = records.read_drawings(drawings_path)
    scenes = read_scene_bundle(scenes_dir)
    oracle = records.read_dataset(oracle_path)
    net = load_model(fmap_path)
    camera = _load_camera(camera_path)
    try:
        result = ground_policy(drawings, scenes, net, oracle, camera)
    except L2D2Error as e:
        raise click.ClickException(str(e))
    save_policy(out, result.grounded)
    base = Path(out)
    save_policy(base.with_name(base.stem + "_intermediate" + base.suffix), result.intermediate)
    if manifest_path:
        records.write_records(
            manifest_path,
            [{"kind": "manifest", "entry": "grounding_phase", **p} for p in result.manifest],
        )
    for phase in result.manifest:
        click.echo(json.dumps(phase, sort_keys=True))
    click.echo(f"grounded policy -> {out}")


# -- eval ---------------------------------------------------------------------


@main.command("eval")
@click.option("--policy", "policy_path", required=True, type=click.Path(exists=True))
@click.option("--task", required=True, type=click.Choice(sim.task_names()))
@click.option("-n", "n_instances", type=int, default=10, show_default=True)
@click.option("--seed", type=int, default=7, show_default=True)
@click.option("--horizon", type=int, default=None)
@click.option("--report", "report_path", type=click.Path(), default=None)
def eval_cmd(policy_path, task, n_instances, seed, horizon, report_path):
    """Roll out a policy and score segment-based success."""
    policy = load_policy(policy_path)
    spec = sim.get_task(task)
    report = sim.evaluate(policy_fn(policy), spec, n_instances, seed, horizon=horizon)
    click.echo(
        f"{task}: mean success {report.mean_success:.3f} +/- {report.stderr:.3f} "
        f"over {n_instances} instances"
    )
    for row in report.per_instance:
        click.echo(json.dumps(row, sort_keys=True))
    if report_path:
        records.write_records(report_path, report.to_records())
        click.echo(f"wrote {report_path}")


# -- pipeline / bench / serve ---------------------------------------------------


@main.command("pipeline")
@click.option("--task", required=True, type=click.Choice(sim.task_names()))
@click.option("--drawings", "n_drawings", type=int, default=50, show_default=True)
@click.option("--oracle", "n_oracle", type=int, default=10, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--eval-seed", type=int, default=1, show_default=True)
@click.option("--out", required=True, type=click.Path())
@click.option("--images/--no-images", default=True, show_default=True)
def pipeline_cmd(task, n_drawings, n_oracle, seed, eval_seed, out, images):
    """Full run: calibrate, draw, compile, train, ground, evaluate."""
    cfg = PipelineConfig(
        task=task,
        n_drawings=n_drawings,
        n_oracle=n_oracle,
        seed=seed,
        eval_seed=eval_seed,
        write_images=images,
    )
    sink = ProgressSink(lambda ev: click.echo(json.dumps(ev, sort_keys=True)))
    result = run_pipeline(cfg, out, progress=sink)
    click.echo(
        f"drawings-only {result.eval_drawings_only.mean_success:.3f} vs "
        f"grounded {result.eval_grounded.mean_success:.3f}"
    )


@main.command("bench")
@click.option("--epochs", type=int, default=60, show_default=True)
@click.option("--samples", type=int, default=3750, show_default=True)
@click.option("--batch-size", type=int, default=64, show_default=True)
@click.option("--json", "as_json", is_flag=True)
def bench(epochs, samples, batch_size, as_json):
    """Benchmark the compiled kernel core against the numpy fallback."""
    from ._kernels import available_backends

    rng = np.random.default_rng(0)
    sizes = {
        "mapping 2-64-64-3": ([2, 64, 64, 3], rng.normal(size=(samples, 2))),
        "policy 13-128-128-7": ([13, 128, 128, 7], rng.normal(size=(samples, 13))),
    }
    rows = []
    for label, (arch, X) in sizes.items():
        Y = rng.normal(size=(samples, arch[-1]))
        net = nn.initialize(arch, seed=0)
        cfg = nn.TrainConfig(learning_rate=0.01, epochs=epochs, batch_size=batch_size, seed=1)
        timings = {}
        for name, backend in available_backends().items():
            t0 = time.perf_counter()
            nn.fit(net, (X, Y), cfg, backend=backend)
            timings[name] = time.perf_counter() - t0
        row = {"net": label, "epochs": epochs, **{k: round(v, 3) for k, v in timings.items()}}
        if "compiled" in timings:
            row["speedup"] = round(timings["numpy"] / timings["compiled"], 2)
        rows.append(row)
    if as_json:
        click.echo(json.dumps(rows, indent=2))
    else:
        for row in rows:
            click.echo(json.dumps(row, sort_keys=True))


@main.command("serve")
@click.option("--root", required=True, type=click.Path())
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8321, show_default=True)
@click.option("--ui", "ui_dir", type=click.Path(), default=None,
              help="serve a built frontend (frontend/ with dist/) at /ui")
def serve_cmd(root, host, port, ui_dir):
    """Run the interactive collection server."""
    from .server import serve

    serve(root, host=host, port=port, ui_dir=ui_dir)


# -- session client (mirrors the HTTP API) -------------------------------------


@main.group()
def session():
    """Client commands against a running session server."""


def _client(server):
    import httpx

    return httpx.Client(base_url=server, timeout=600.0)


@session.command("create")
@click.option("--server", default="http://127.0.0.1:8321", show_default=True)
@click.option("--task", required=True)
@click.option("-m", "m_scenes", type=int, required=True)
@click.option("--seed", type=int, default=0)
@click.option("--config", "config_json", default=None, help="JSON config overrides")
def session_create(server, task, m_scenes, seed, config_json):
    body = {"task": task, "m_scenes": m_scenes, "seed": seed}
    if config_json:
        body["config"] = json.loads(config_json)
    r = _client(server).post("/v1/sessions", json=body)
    click.echo(json.dumps(r.json(), indent=2, sort_keys=True))
    if r.status_code >= 400:
        sys.exit(1)


@session.command("show")
@click.option("--server", default="http://127.0.0.1:8321", show_default=True)
@click.argument("session_id")
def session_show(server, session_id):
    r = _client(server).get(f"/v1/sessions/{session_id}")
    click.echo(json.dumps(r.json(), indent=2, sort_keys=True))


@session.command("next")
@click.option("--server", default="http://127.0.0.1:8321", show_default=True)
@click.option("--image-out", type=click.Path(), default=None, help="save the scene image")
@click.argument("session_id")
def session_next(server, session_id, image_out):
    client = _client(server)
    r = client.get(f"/v1/sessions/{session_id}/scenes/next")
    payload = r.json()
    click.echo(json.dumps(payload, indent=2, sort_keys=True))
    if image_out and not payload.get("done"):
        img = client.get(payload["image_url"], params={"format": "ppm"})
        Path(image_out).write_bytes(img.content)
        click.echo(f"wrote {image_out}", err=True)


@session.command("submit")
@click.option("--server", default="http://127.0.0.1:8321", show_default=True)
@click.option("--payload", "payload_path", required=True, type=click.Path(exists=True),
              help="JSON file: scene_id, stroke, rotation_keypoints, gripper_events")
@click.argument("session_id")
def session_submit(server, session_id, payload_path):
    body = json.loads(Path(payload_path).read_text())
    r = _client(server).post(f"/v1/sessions/{session_id}/drawings", json=body)
    click.echo(json.dumps(r.json(), indent=2, sort_keys=True))
    if r.status_code >= 400:
        sys.exit(1)


@session.command("stage")
@click.option("--server", default="http://127.0.0.1:8321", show_default=True)
@click.argument("session_id")
@click.argument("stage")
def session_stage(server, session_id, stage):
    r = _client(server).post(f"/v1/sessions/{session_id}/stages/{stage}", json={})
    click.echo(json.dumps(r.json(), indent=2, sort_keys=True))
    if r.status_code >= 400:
        sys.exit(1)


@session.command("events")
@click.option("--server", default="http://127.0.0.1:8321", show_default=True)
@click.option("--after", type=int, default=-1)
@click.argument("session_id")
def session_events(server, session_id, after):
    with _client(server).stream(
        "GET", f"/v1/sessions/{session_id}/events", params={"after": after}
    ) as r:
        for line in r.iter_lines():
            if line.startswith("data: "):
                click.echo(line[6:])


if __name__ == "__main__":
    main()
