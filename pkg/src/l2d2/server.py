"""HTTP service for interactive collection sessions.

Serves rendered scenes, accepts drawings, and runs the pipeline stages on
a background worker, streaming progress as server-sent events. All
endpoints live under the versioned ``/v1`` prefix; payload schemas are
documented in docs/http_api.md. The CLI mirrors every endpoint.
"""

from __future__ import annotations

import io
import json
import threading
import uuid
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse, Response, StreamingResponse

from . import records, sim
from .compile import compile_dataset
from .errors import L2D2Error, SceneSynthesisFailed
from .mapping import BoxWorkspace, generate_calibration, train_mapping, workspace_cloud
from .pipeline import PipelineConfig, derive_seed
from .placement import optimal_placement
from .policy import GroundingConfig, ground_policy, policy_fn, save_policy, train_bc
from .scenes import synthesize_scenes, write_ppm
from .synthetic import arc_fractions, map_indices_to_resampled
from .types import (
    Drawing,
    DrawingWaypoint,
    PixelPoint,
    Rotation,
    interpolate_annotations,
    resample_drawing,
)

START_PROXIMITY_PX = 15.0

# SSE streams close after this much silence; clients resume via after=/
# Last-Event-ID.
IDLE_DISCONNECT_SECONDS = 10.0

STAGES = ("collecting", "compiling", "training", "grounding", "evaluating", "done")
RUNNABLE = ("compile", "train", "ground", "evaluate")
_STAGE_AFTER = {"compile": "compiling", "train": "training", "ground": "grounding",
                "evaluate": "evaluating"}


@dataclass
class Session:
    session_id: str
    task_name: str
    seed: int
    config: PipelineConfig
    camera: object
    mapping_net: object
    scenes: dict  # id -> Scene
    queue_ids: list  # pending scene ids, in order
    drawings: dict = field(default_factory=dict)  # scene_id -> Drawing
    archived: list = field(default_factory=list)  # replaced drawings
    status: str = "collecting"
    job: threading.Thread | None = None
    job_stage: str | None = None
    job_error: str | None = None
    events: list = field(default_factory=list)  # buffered SSE payloads
    event_cv: threading.Condition = field(default_factory=threading.Condition)
    idempotency: dict = field(default_factory=dict)
    artifacts: dict = field(default_factory=dict)
    manifest: list = field(default_factory=list)
    lock: threading.RLock = field(default_factory=threading.RLock)

    def emit(self, payload: dict) -> int:
        with self.event_cv:
            seq = len(self.events)
            self.events.append({"seq": seq, **payload})
            self.event_cv.notify_all()
        return seq

    def public_state(self) -> dict:
        return {
            "session_id": self.session_id,
            "task": self.task_name,
            "status": self.status,
            "pending_scenes": len(self.queue_ids),
            "received_drawings": len(self.drawings),
            "running_stage": self.job_stage,
            "error": self.job_error,
            "artifacts": {k: v for k, v in sorted(self.artifacts.items())},
        }


def validate_stroke_payload(
    stroke, end_effector_pixel, width: int, height: int, proximity_px: float = START_PROXIMITY_PX
) -> dict:
    """Shared validation rule for submitted strokes.

    Returns {"ok": True} or {"ok": False, "reason": ..., "expected_pixel":
    ...}; the UI applies the same checks before submitting.
    """
    if not isinstance(stroke, list) or len(stroke) < 2:
        return {"ok": False, "reason": "stroke needs at least 2 samples"}
    for p in stroke:
        if (
            not isinstance(p, (list, tuple))
            or len(p) != 2
            or not all(isinstance(v, (int, float)) for v in p)
        ):
            return {"ok": False, "reason": "stroke samples must be [u, v] numbers"}
        if not (0 <= p[0] < width and 0 <= p[1] < height):
            return {"ok": False, "reason": "stroke leaves the image bounds"}
    first = stroke[0]
    du = first[0] - end_effector_pixel[0]
    dv = first[1] - end_effector_pixel[1]
    if (du * du + dv * dv) ** 0.5 > proximity_px:
        return {
            "ok": False,
            "reason": "start point is not on the end-effector",
            "expected_pixel": list(end_effector_pixel),
        }
    if all(p[0] == first[0] and p[1] == first[1] for p in stroke):
        return {"ok": False, "reason": "stroke has no extent"}
    return {"ok": True}


def build_drawing(scene, stroke, rotation_keypoints, gripper_events, n_waypoints: int) -> Drawing:
    """Resample a raw stroke and spread its annotations onto the grid.

    Annotation indices refer to raw stroke samples; they are mapped to the
    resampled grid by arc-length fraction.
    """
    pts = [PixelPoint(float(u), float(v)) for u, v in stroke]
    resampled = resample_drawing(pts, n_waypoints)
    fractions = arc_fractions(np.array(stroke, dtype=np.float64))

    if rotation_keypoints:
        raw_idx = [int(i) for i, _ in rotation_keypoints]
        mapped = map_indices_to_resampled(fractions, raw_idx, n_waypoints)
        keypoints = []
        seen = set()
        for (_, rot), j in zip(rotation_keypoints, mapped):
            if j not in seen:
                keypoints.append((j, Rotation(float(rot[0]), float(rot[1]), float(rot[2]))))
                seen.add(j)
    else:
        r0 = scene.robot_state.rotation
        keypoints = [(0, r0)]

    events = []
    if gripper_events:
        raw_idx = [int(i) for i, _ in gripper_events]
        mapped = map_indices_to_resampled(fractions, raw_idx, n_waypoints)
        seen = set()
        for (_, g), j in zip(gripper_events, mapped):
            if j not in seen:
                events.append((j, int(g)))
                seen.add(j)

    annotations = interpolate_annotations(
        keypoints, events, n_waypoints, initial_gripper=scene.robot_state.gripper
    )
    waypoints = tuple(
        DrawingWaypoint(p, rot, g) for p, (rot, g) in zip(resampled, annotations)
    )
    return Drawing(scene_id=scene.scene_id, waypoints=waypoints)


class SessionStore:
    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.sessions: dict = {}
        self.scene_index: dict = {}  # scene_id -> (session_id)
        self.lock = threading.RLock()

    def create(self, task_name: str, m_scenes: int, seed: int, overrides: dict) -> Session:
        if m_scenes < 1:
            raise L2D2Error("EmptySession: a session needs at least one scene")
        task = sim.get_task(task_name)
        cfg = PipelineConfig(task=task_name, n_drawings=m_scenes, seed=seed)
        if overrides:
            cfg = replace(cfg, **_config_overrides(cfg, overrides))

        workspace = BoxWorkspace()
        cloud = workspace_cloud(workspace, cfg.cloud_count, seed=derive_seed(seed, 1))
        camera = optimal_placement(cloud, distance=cfg.camera_distance)
        calib = generate_calibration(camera, workspace, cfg.calibration_count, seed=derive_seed(seed, 2))
        mapping_result = train_mapping(calib, replace(cfg.map_train, seed=derive_seed(seed, 3)))

        base = sim.base_scene_for_task(task, camera, seed=derive_seed(seed, 4))
        scene_list = synthesize_scenes(base, m_scenes, seed=derive_seed(seed, 11), constraints=task.constraints)

        session_id = uuid.uuid4().hex[:12]
        scene_map = {}
        sdir = self.root / session_id
        (sdir / "scenes").mkdir(parents=True, exist_ok=True)
        recs = []
        for s in scene_list:
            sid = f"{session_id}:{s.scene_id}"
            s = replace(s, scene_id=sid)
            scene_map[sid] = s
            write_ppm(sdir / "scenes" / f"{sid.replace(':', '_')}.ppm", s.image)
            recs.append(s.to_record(image_file=f"{sid.replace(':', '_')}.ppm"))
        records.write_records(sdir / "scenes" / "scenes.l2d2", recs)
        records.write_records(sdir / "camera.l2d2", [camera.to_record()])
        rec = mapping_result.net.to_record()
        rec["role"] = "mapping"
        records.write_records(sdir / "fmap.model", [rec])

        session = Session(
            session_id=session_id,
            task_name=task_name,
            seed=seed,
            config=cfg,
            camera=camera,
            mapping_net=mapping_result.net,
            scenes=scene_map,
            queue_ids=list(scene_map.keys()),
        )
        with self.lock:
            self.sessions[session_id] = session
            for sid in scene_map:
                self.scene_index[sid] = session_id
        _refresh_artifacts(self, session)
        session.emit({"type": "session_created", "scenes": len(scene_map)})
        return session

    def get(self, session_id: str) -> Session:
        with self.lock:
            if session_id not in self.sessions:
                raise KeyError(session_id)
            return self.sessions[session_id]

    def dir(self, session: Session) -> Path:
        return self.root / session.session_id


def _config_overrides(cfg: PipelineConfig, overrides: dict) -> dict:
    """Map a flat override dict onto PipelineConfig fields.

    Train configs accept nested dicts, e.g. {"bc_train": {"epochs": 50}}.
    """
    out = {}
    for key, value in overrides.items():
        if key in ("map_train", "map_finetune", "bc_train", "bc_finetune"):
            base = getattr(cfg, key)
            out[key] = replace(base, **value)
        elif key in ("n_oracle", "eval_instances", "eval_seed", "calibration_count",
                     "cloud_count", "n_waypoints"):
            out[key] = int(value)
        elif key in ("noise_px", "camera_distance"):
            out[key] = float(value)
        else:
            raise L2D2Error(f"unknown config override {key!r}")
    return out


# -- stage jobs ---------------------------------------------------------------


def _run_stage_job(store: SessionStore, session: Session, stage: str) -> None:
    sdir = store.dir(session)
    task = sim.get_task(session.task_name)
    try:
        if stage == "compile":
            drawings = list(session.drawings.values())
            dataset, reports, skipped = compile_dataset(
                drawings, session.scenes, session.mapping_net
            )
            if len(dataset) == 0:
                raise L2D2Error("NoTrainingData: no drawings to compile")
            records.write_dataset(sdir / "reconstructed.l2d2", dataset)
            records.write_drawings(sdir / "drawings.l2d2", drawings)
            session.emit(
                {
                    "type": "progress",
                    "stage": stage,
                    "trajectories": dataset.n_trajectories(),
                    "pairs": len(dataset),
                    "skipped": len(skipped),
                }
            )
            _advance(session, "compiling")
        elif stage == "train":
            dataset = records.read_dataset(sdir / "reconstructed.l2d2")
            cfg = replace(session.config.bc_train, seed=derive_seed(session.seed, 6))
            policy, curve = train_bc(dataset, cfg)
            for epoch in range(0, len(curve), max(1, len(curve) // 10)):
                session.emit(
                    {"type": "progress", "stage": stage, "epoch": epoch, "loss": curve[epoch]}
                )
            save_policy(sdir / "policy_drawings_only.model", policy)
            session.emit({"type": "progress", "stage": stage, "param_hash": policy.param_hash()})
            _advance(session, "training")
        elif stage == "ground":
            oracle = sim.oracle_dataset(task, session.config.n_oracle, seed=derive_seed(session.seed, 7))
            records.write_dataset(sdir / "oracle.l2d2", oracle)
            drawings = list(session.drawings.values())
            result = ground_policy(
                drawings,
                session.scenes,
                session.mapping_net,
                oracle,
                session.camera,
                cfgs=GroundingConfig(
                    map_finetune=replace(session.config.map_finetune, seed=derive_seed(session.seed, 8)),
                    phase1=replace(session.config.bc_train, seed=derive_seed(session.seed, 9)),
                    phase2=replace(session.config.bc_finetune, seed=derive_seed(session.seed, 10)),
                ),
            )
            rec = result.mapping_net.to_record()
            rec["role"] = "mapping"
            records.write_records(sdir / "fmap_ft.model", [rec])
            records.write_dataset(sdir / "recompiled.l2d2", result.recompiled)
            save_policy(sdir / "policy_intermediate.model", result.intermediate)
            save_policy(sdir / "policy_grounded.model", result.grounded)
            for phase in result.manifest:
                session.emit({"type": "progress", "stage": stage, **phase})
            _advance(session, "grounding")
        elif stage == "evaluate":
            from .policy import load_policy

            reports = {}
            for name in ("policy_drawings_only", "policy_grounded"):
                path = sdir / f"{name}.model"
                if not path.exists():
                    continue
                policy = load_policy(path)
                report = sim.evaluate(
                    policy_fn(policy), task, session.config.eval_instances,
                    session.config.eval_seed,
                )
                records.write_records(sdir / f"eval_{name}.report", report.to_records())
                reports[name] = report.mean_success
                for row in report.per_instance:
                    session.emit(
                        {"type": "progress", "stage": stage, "policy": name, **row}
                    )
            session.emit({"type": "progress", "stage": stage, "mean_success": reports})
            _advance(session, "done")
        _record_manifest(store, session, stage)
        _refresh_artifacts(store, session)
        session.emit({"type": "stage_complete", "stage": stage})
    except Exception as e:  # surfaced with a stage tag
        session.job_error = f"{stage}: {e}"
        session.emit({"type": "stage_failed", "stage": stage, "error": str(e)})
    finally:
        with session.lock:
            session.job = None
            session.job_stage = None


# Input/output artifact names per stage; the manifest chains their
# hashes into a DAG from collected drawings to the final policy.
_STAGE_IO = {
    "compile": (("drawings_log.l2d2", "fmap.model"), ("drawings.l2d2", "reconstructed.l2d2")),
    "train": (("reconstructed.l2d2",), ("policy_drawings_only.model",)),
    "ground": (
        ("drawings.l2d2", "fmap.model", "oracle.l2d2"),
        ("fmap_ft.model", "recompiled.l2d2", "policy_intermediate.model",
         "policy_grounded.model"),
    ),
    "evaluate": (
        ("policy_drawings_only.model", "policy_grounded.model"),
        ("eval_policy_drawings_only.report", "eval_policy_grounded.report"),
    ),
}


def _record_manifest(store: "SessionStore", session: Session, stage: str) -> None:
    sdir = store.dir(session)
    inputs, outputs = _STAGE_IO[stage]

    def hashes(names):
        return {
            n: records.file_sha256(sdir / n) for n in names if (sdir / n).is_file()
        }

    entry = {
        "kind": "manifest",
        "entry": stage,
        "inputs": hashes(inputs),
        "outputs": hashes(outputs),
    }
    # Entries stay in pipeline order so re-running a stage with unchanged
    # inputs reproduces the manifest byte for byte.
    session.manifest = [e for e in session.manifest if e["entry"] != stage]
    session.manifest.append(entry)
    session.manifest.sort(key=lambda e: RUNNABLE.index(e["entry"]))
    records.write_records(sdir / "manifest.l2d2", session.manifest)


def _advance(session: Session, status: str) -> None:
    # Stage status is monotone; re-running an earlier stage never rolls
    # the session back.
    if STAGES.index(status) > STAGES.index(session.status):
        session.status = status


def _refresh_artifacts(store: SessionStore, session: Session) -> None:
    sdir = store.dir(session)
    out = {}
    for p in sorted(sdir.rglob("*")):
        if p.is_file():
            out[str(p.relative_to(sdir))] = records.file_sha256(p)
    session.artifacts = out


# -- FastAPI app ---------------------------------------------------------------


def create_app(root, ui_dir=None) -> FastAPI:
    app = FastAPI(title="l2d2 session server", version="1")
    store = SessionStore(Path(root))
    app.state.store = store

    if ui_dir is not None and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    def get_session(session_id: str) -> Session:
        try:
            return store.get(session_id)
        except KeyError:
            raise HTTPException(404, f"unknown session {session_id!r}")

    @app.get("/v1/health")
    def health():
        return {"ok": True, "version": 1}

    @app.post("/v1/sessions", status_code=201)
    def create_session(body: dict):
        task = body.get("task")
        m_scenes = int(body.get("m_scenes", 0))
        seed = int(body.get("seed", 0))
        overrides = body.get("config", {})
        if task not in sim.task_names():
            raise HTTPException(422, f"unknown task {task!r}; known: {sim.task_names()}")
        if m_scenes < 1:
            raise HTTPException(422, "EmptySession: m_scenes must be >= 1")
        try:
            session = store.create(task, m_scenes, seed, overrides)
        except SceneSynthesisFailed as e:
            raise HTTPException(409, f"SceneSynthesisFailed: {e}")
        except L2D2Error as e:
            raise HTTPException(422, str(e))
        return session.public_state()

    @app.get("/v1/sessions/{session_id}")
    def session_state(session_id: str):
        return get_session(session_id).public_state()

    @app.get("/v1/sessions/{session_id}/scenes/next")
    def next_scene(session_id: str, request: Request):
        session = get_session(session_id)
        with session.lock:
            if not session.queue_ids:
                return JSONResponse({"done": True, "remaining": 0})
            sid = session.queue_ids[0]
            scene = session.scenes[sid]
            return {
                "done": False,
                "scene_id": sid,
                "remaining": len(session.queue_ids),
                "image_url": f"/v1/scenes/{sid}/image",
                "width": scene.camera.width,
                "height": scene.camera.height,
                "end_effector_pixel": scene.end_effector_pixel.to_record(),
                "object_pixels": {
                    k: v.to_record() for k, v in sorted(scene.object_pixels.items())
                },
                "initial_rotation": scene.robot_state.rotation.to_record(),
                "initial_gripper": scene.robot_state.gripper,
                "n_waypoints": session.config.n_waypoints,
            }

    @app.get("/v1/scenes/{scene_id}/image")
    def scene_image(scene_id: str, format: str = "png"):
        with store.lock:
            session_id = store.scene_index.get(scene_id)
        if session_id is None:
            raise HTTPException(404, f"unknown scene {scene_id!r}")
        scene = store.get(session_id).scenes[scene_id]
        if format == "ppm":
            h, w = scene.image.shape[:2]
            payload = f"P6\n{w} {h}\n255\n".encode() + scene.image.tobytes()
            return Response(payload, media_type="image/x-portable-pixmap")
        if format == "png":
            from PIL import Image

            buf = io.BytesIO()
            Image.fromarray(scene.image).save(buf, format="PNG")
            return Response(buf.getvalue(), media_type="image/png")
        raise HTTPException(422, f"unsupported format {format!r}")

    @app.post("/v1/validate")
    def validate(body: dict):
        """Stateless stroke validation; the UI mirrors this rule locally."""
        return validate_stroke_payload(
            body.get("stroke"),
            body.get("end_effector_pixel", (0.0, 0.0)),
            int(body.get("width", 960)),
            int(body.get("height", 720)),
        )

    @app.post("/v1/sessions/{session_id}/drawings")
    def submit_drawing(session_id: str, body: dict):
        session = get_session(session_id)
        key = body.get("idempotency_key")
        with session.lock:
            if key is not None and key in session.idempotency:
                return session.idempotency[key]
            if session.job is not None:
                raise HTTPException(423, "StageLocked: a pipeline job is running")
            scene_id = body.get("scene_id")
            if scene_id not in session.scenes:
                raise HTTPException(404, f"UnknownScene: {scene_id!r}")
            replaces_previous = scene_id in session.drawings
            if scene_id not in session.queue_ids and not replaces_previous:
                raise HTTPException(409, f"UnknownScene: {scene_id!r} is not collectable")
            scene = session.scenes[scene_id]
            stroke = body.get("stroke", [])
            verdict = validate_stroke_payload(
                stroke,
                (scene.end_effector_pixel.u, scene.end_effector_pixel.v),
                scene.camera.width,
                scene.camera.height,
            )
            if not verdict["ok"]:
                detail = {"error": "StartPointRejected" if "expected_pixel" in verdict
                          else "InvalidStroke", **verdict}
                raise HTTPException(422, detail)
            try:
                drawing = build_drawing(
                    scene,
                    stroke,
                    body.get("rotation_keypoints", []),
                    body.get("gripper_events", []),
                    session.config.n_waypoints,
                )
            except L2D2Error as e:
                raise HTTPException(422, {"error": type(e).__name__, "reason": str(e)})
            if replaces_previous:
                session.archived.append(session.drawings[scene_id])
            session.drawings[scene_id] = drawing
            if scene_id in session.queue_ids:
                session.queue_ids.remove(scene_id)
            sdir = store.dir(session)
            records.append_records(
                sdir / "drawings_log.l2d2", [records.drawing_record(drawing)]
            )
            response = {
                "accepted": True,
                "scene_id": scene_id,
                "n_waypoints": len(drawing.waypoints),
                "replaces_previous": replaces_previous,
                "remaining": len(session.queue_ids),
                "waypoints": [w.to_record() for w in drawing.waypoints],
            }
            if key is not None:
                session.idempotency[key] = response
            session.emit(
                {"type": "drawing_accepted", "scene_id": scene_id,
                 "remaining": len(session.queue_ids)}
            )
            return response

    @app.get("/v1/sessions/{session_id}/artifacts/{name}")
    def get_artifact(session_id: str, name: str):
        session = get_session(session_id)
        path = (store.dir(session) / name).resolve()
        if store.dir(session).resolve() not in path.parents or not path.is_file():
            raise HTTPException(404, f"unknown artifact {name!r}")
        return Response(path.read_bytes(), media_type="text/plain; charset=utf-8")

    @app.get("/v1/sessions/{session_id}/drawings/{scene_id}")
    def get_drawing(session_id: str, scene_id: str):
        session = get_session(session_id)
        with session.lock:
            if scene_id not in session.drawings:
                raise HTTPException(404, f"no drawing stored for scene {scene_id!r}")
            return records.drawing_record(session.drawings[scene_id])

    @app.post("/v1/sessions/{session_id}/stages/{stage}", status_code=202)
    def run_stage(session_id: str, stage: str, body: dict = None):
        session = get_session(session_id)
        if stage not in RUNNABLE:
            raise HTTPException(422, f"unknown stage {stage!r}; known: {RUNNABLE}")
        body = body or {}
        key = body.get("idempotency_key")
        with session.lock:
            if key is not None and key in session.idempotency:
                return session.idempotency[key]
            if session.job is not None:
                raise HTTPException(423, "StageLocked: a pipeline job is already running")
            # Stage transitions are monotone; a stage may re-run only if
            # its predecessors completed.
            target = _STAGE_AFTER[stage]
            if STAGES.index(target) > STAGES.index(session.status) + 1:
                raise HTTPException(
                    409,
                    f"stage {stage!r} not runnable from status {session.status!r}",
                )
            session.job_error = None
            session.job_stage = stage
            thread = threading.Thread(
                target=_run_stage_job, args=(store, session, stage), daemon=True
            )
            session.job = thread
            thread.start()
            response = {"job": stage, "status": "started"}
            if key is not None:
                session.idempotency[key] = response
            return response

    @app.get("/v1/sessions/{session_id}/events")
    async def events(session_id: str, request: Request, after: int = -1):
        session = get_session(session_id)
        resume = request.headers.get("Last-Event-ID")
        if resume is not None:
            after = int(resume)

        # Streams close after a short idle window; clients reconnect with
        # the resume token, which keeps abandoned connections from
        # pinning worker threads.
        def stream():
            next_seq = after + 1
            idle = 0.0
            while True:
                with session.event_cv:
                    while next_seq >= len(session.events):
                        if not session.event_cv.wait(timeout=0.5):
                            idle += 0.5
                            break
                    batch = session.events[next_seq:]
                if batch:
                    idle = 0.0
                    for ev in batch:
                        yield f"id: {ev['seq']}\ndata: {json.dumps(ev, sort_keys=True)}\n\n"
                        next_seq = ev["seq"] + 1
                else:
                    yield ": keepalive\n\n"
                if session.status == "done" and next_seq >= len(session.events):
                    return
                if idle >= IDLE_DISCONNECT_SECONDS:
                    return

        return StreamingResponse(stream(), media_type="text/event-stream")

    return app


def serve(root, host: str = "127.0.0.1", port: int = 8321, ui_dir=None):
    import uvicorn

    uvicorn.run(create_app(root, ui_dir=ui_dir), host=host, port=port, log_level="warning")
