import json
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from l2d2.server import create_app

# Small budgets so session creation and stage jobs run in seconds.
FAST_CONFIG = {
    "calibration_count": 300,
    "cloud_count": 200,
    "n_oracle": 2,
    "eval_instances": 2,
    "map_train": {"epochs": 40},
    "map_finetune": {"epochs": 10},
    "bc_train": {"epochs": 25},
    "bc_finetune": {"epochs": 8},
}


@pytest.fixture()
def client(tmp_path):
    app = create_app(tmp_path / "server-root")
    with TestClient(app) as c:
        yield c


def make_session(client, task="lift", m=2, seed=5):
    r = client.post(
        "/v1/sessions",
        json={"task": task, "m_scenes": m, "seed": seed, "config": FAST_CONFIG},
    )
    assert r.status_code == 201, r.text
    return r.json()


def next_scene(client, sid):
    r = client.get(f"/v1/sessions/{sid}/scenes/next")
    assert r.status_code == 200
    return r.json()


def straight_stroke(scene, length=120.0, samples=40):
    u0, v0 = scene["end_effector_pixel"]
    direction = 1.0 if u0 < scene["width"] / 2 else -1.0
    return [
        [u0 + direction * length * t, v0 + 10.0 * t]
        for t in np.linspace(0, 1, samples)
    ]


def submit(client, sid, scene, stroke=None, **extra):
    body = {
        "scene_id": scene["scene_id"],
        "stroke": stroke if stroke is not None else straight_stroke(scene),
        "rotation_keypoints": [],
        "gripper_events": [[30, 1]],
    }
    body.update(extra)
    return client.post(f"/v1/sessions/{sid}/drawings", json=body)


def wait_idle(client, sid, timeout=120.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        state = client.get(f"/v1/sessions/{sid}").json()
        if state["running_stage"] is None:
            return state
        time.sleep(0.1)
    raise TimeoutError("stage did not finish")


class TestSessionLifecycle:
    def test_create_queues_all_scenes(self, client):
        state = make_session(client, m=3)
        assert state["pending_scenes"] == 3
        assert state["status"] == "collecting"

    def test_same_seed_same_scenes_new_id(self, client):
        a = make_session(client, seed=9)
        b = make_session(client, seed=9)
        assert a["session_id"] != b["session_id"]
        sa = next_scene(client, a["session_id"])
        sb = next_scene(client, b["session_id"])
        assert sa["end_effector_pixel"] == sb["end_effector_pixel"]
        assert sa["object_pixels"] == sb["object_pixels"]

    def test_empty_session_rejected(self, client):
        r = client.post("/v1/sessions", json={"task": "lift", "m_scenes": 0, "seed": 1})
        assert r.status_code == 422

    def test_unknown_task(self, client):
        r = client.post("/v1/sessions", json={"task": "fly", "m_scenes": 2, "seed": 1})
        assert r.status_code == 422

    def test_unknown_session_404(self, client):
        assert client.get("/v1/sessions/nope").status_code == 404


class TestSceneServing:
    def test_next_scene_payload(self, client):
        sid = make_session(client)["session_id"]
        scene = next_scene(client, sid)
        assert scene["done"] is False
        assert scene["remaining"] == 2
        assert set(scene["object_pixels"]) == {"cube"}
        assert 0 <= scene["end_effector_pixel"][0] < scene["width"]

    def test_image_formats(self, client):
        sid = make_session(client)["session_id"]
        scene = next_scene(client, sid)
        png = client.get(scene["image_url"])
        assert png.status_code == 200
        assert png.content[:8] == b"\x89PNG\r\n\x1a\n"
        ppm = client.get(scene["image_url"], params={"format": "ppm"})
        assert ppm.content.startswith(b"P6")

    def test_unknown_scene_image(self, client):
        make_session(client)
        assert client.get("/v1/scenes/nope/image").status_code == 404


class TestSubmission:
    def test_accept_and_dequeue(self, client):
        sid = make_session(client)["session_id"]
        scene = next_scene(client, sid)
        r = submit(client, sid, scene)
        assert r.status_code == 200, r.text
        payload = r.json()
        assert payload["accepted"] and payload["n_waypoints"] == 75
        assert payload["remaining"] == 1
        follow = next_scene(client, sid)
        assert follow["scene_id"] != scene["scene_id"]

    def test_start_too_far_rejected_with_expected_pixel(self, client):
        sid = make_session(client)["session_id"]
        scene = next_scene(client, sid)
        u0, v0 = scene["end_effector_pixel"]
        stroke = [[u0 + 40, v0], [u0 + 80, v0 + 5], [u0 + 120, v0 + 10]]
        r = submit(client, sid, scene, stroke=stroke)
        assert r.status_code == 422
        detail = r.json()["detail"]
        assert detail["error"] == "StartPointRejected"
        assert detail["expected_pixel"] == [u0, v0]

    def test_start_close_accepted(self, client):
        sid = make_session(client)["session_id"]
        scene = next_scene(client, sid)
        u0, v0 = scene["end_effector_pixel"]
        stroke = [[u0 + 3, v0]] + straight_stroke(scene)[1:]
        assert submit(client, sid, scene, stroke=stroke).status_code == 200

    def test_unknown_scene(self, client):
        sid = make_session(client)["session_id"]
        scene = dict(next_scene(client, sid))
        scene["scene_id"] = "spoof"
        assert submit(client, sid, scene).status_code == 404

    def test_resubmission_archives_previous(self, client):
        sid = make_session(client)["session_id"]
        scene = next_scene(client, sid)
        assert submit(client, sid, scene).status_code == 200
        r = submit(client, sid, scene)
        assert r.status_code == 200
        assert r.json()["replaces_previous"] is True

    def test_idempotency_key_no_duplicate(self, client):
        sid = make_session(client)["session_id"]
        scene = next_scene(client, sid)
        a = submit(client, sid, scene, idempotency_key="k1")
        b = submit(client, sid, scene, idempotency_key="k1")
        assert a.json() == b.json()
        assert b.json()["replaces_previous"] is False  # replay, not resubmit

    def test_stored_drawing_fetchable(self, client):
        sid = make_session(client)["session_id"]
        scene = next_scene(client, sid)
        submit(client, sid, scene)
        r = client.get(f"/v1/sessions/{sid}/drawings/{scene['scene_id']}")
        assert r.status_code == 200
        rec = r.json()
        assert rec["kind"] == "drawing"
        assert len(rec["waypoints"]) == 75


class TestValidateEndpoint:
    def test_matches_submission_rule(self, client):
        body = {
            "stroke": [[100, 100], [150, 120], [200, 140]],
            "end_effector_pixel": [101, 100],
            "width": 960,
            "height": 720,
        }
        assert client.post("/v1/validate", json=body).json()["ok"] is True
        body["end_effector_pixel"] = [300, 300]
        verdict = client.post("/v1/validate", json=body).json()
        assert verdict["ok"] is False
        assert verdict["expected_pixel"] == [300, 300]


class TestStages:
    def collect_all(self, client, sid):
        while True:
            scene = next_scene(client, sid)
            if scene.get("done"):
                break
            lift_stroke(client, sid, scene)

    def test_compile_without_drawings_fails_with_stage_tag(self, client):
        sid = make_session(client)["session_id"]
        r = client.post(f"/v1/sessions/{sid}/stages/compile", json={})
        assert r.status_code == 202
        state = wait_idle(client, sid)
        assert state["error"] is not None and "NoTrainingData" in state["error"]

    def test_unknown_stage(self, client):
        sid = make_session(client)["session_id"]
        assert client.post(f"/v1/sessions/{sid}/stages/warp", json={}).status_code == 422

    def test_out_of_order_stage_rejected(self, client):
        sid = make_session(client)["session_id"]
        r = client.post(f"/v1/sessions/{sid}/stages/evaluate", json={})
        assert r.status_code == 409

    def test_full_run_and_artifacts(self, client):
        sid = make_session(client, m=2)["session_id"]
        for _ in range(2):
            scene = next_scene(client, sid)
            lift_stroke(client, sid, scene)
        for stage in ("compile", "train", "ground", "evaluate"):
            r = client.post(f"/v1/sessions/{sid}/stages/{stage}", json={})
            assert r.status_code == 202, r.text
            state = wait_idle(client, sid)
            assert state["error"] is None, state["error"]
        assert state["status"] == "done"
        names = set(state["artifacts"])
        for expected in (
            "reconstructed.l2d2",
            "policy_drawings_only.model",
            "oracle.l2d2",
            "fmap_ft.model",
            "recompiled.l2d2",
            "policy_grounded.model",
            "eval_policy_grounded.report",
        ):
            assert expected in names, f"{expected} missing from {names}"

    def test_rerun_stage_identical_hashes(self, client):
        sid = make_session(client, m=2)["session_id"]
        for _ in range(2):
            scene = next_scene(client, sid)
            lift_stroke(client, sid, scene)
        client.post(f"/v1/sessions/{sid}/stages/compile", json={})
        state1 = wait_idle(client, sid)
        h1 = state1["artifacts"]["reconstructed.l2d2"]
        client.post(f"/v1/sessions/{sid}/stages/compile", json={})
        state2 = wait_idle(client, sid)
        assert state2["artifacts"]["reconstructed.l2d2"] == h1

    def test_submission_locked_during_job(self, client):
        sid = make_session(client, m=2)["session_id"]
        scene = next_scene(client, sid)
        lift_stroke(client, sid, scene)
        # Start a compile job and immediately try to submit.
        client.post(f"/v1/sessions/{sid}/stages/compile", json={})
        second = next_scene(client, sid)
        r = submit(client, sid, second)
        wait_idle(client, sid)
        assert r.status_code in (200, 423)  # locked only while the job runs
        if r.status_code == 423:
            assert "StageLocked" in r.text


def lift_stroke(client, sid, scene):
    """A drawing that reaches toward the cube pixel and closes there."""
    u0, v0 = scene["end_effector_pixel"]
    cu, cv = scene["object_pixels"]["cube"]
    stroke = [
        [u0 + (cu - u0) * t, v0 + (cv - v0) * t] for t in np.linspace(0, 1, 50)
    ]
    body = {
        "scene_id": scene["scene_id"],
        "stroke": stroke,
        "rotation_keypoints": [],
        "gripper_events": [[49, 1]],
    }
    r = client.post(f"/v1/sessions/{sid}/drawings", json=body)
    assert r.status_code == 200, r.text
    return r


class TestEvents:
    def test_events_stream_and_resume(self, client):
        sid = make_session(client, m=2)["session_id"]
        scene = next_scene(client, sid)
        lift_stroke(client, sid, scene)
        # Collected events so far are replayed from the buffer.
        with client.stream("GET", f"/v1/sessions/{sid}/events", params={"after": -1}) as r:
            events = []
            for line in r.iter_lines():
                if line.startswith("data: "):
                    events.append(json.loads(line[len("data: "):]))
                    if len(events) >= 2:
                        break
        assert events[0]["type"] == "session_created"
        assert events[1]["type"] == "drawing_accepted"
        assert events[1]["seq"] == 1
        # Resuming after seq 0 skips the first event.
        with client.stream("GET", f"/v1/sessions/{sid}/events", params={"after": 0}) as r:
            for line in r.iter_lines():
                if line.startswith("data: "):
                    first = json.loads(line[len("data: "):])
                    break
        assert first["seq"] == 1


class TestArtifacts:
    def test_artifact_download_and_traversal_guard(self, client):
        sid = make_session(client)["session_id"]
        state = client.get(f"/v1/sessions/{sid}").json()
        name = next(iter(state["artifacts"]))
        r = client.get(f"/v1/sessions/{sid}/artifacts/{name}")
        assert r.status_code == 200
        assert client.get(f"/v1/sessions/{sid}/artifacts/no-such-file").status_code == 404
        evil = client.get(f"/v1/sessions/{sid}/artifacts/..%2f..%2fetc%2fpasswd")
        assert evil.status_code == 404


class TestManifestDAG:
    def test_stage_manifest_chains_hashes(self, client, tmp_path):
        sid = make_session(client, m=2)["session_id"]
        for _ in range(2):
            scene = next_scene(client, sid)
            lift_stroke(client, sid, scene)
        for stage in ("compile", "train", "ground", "evaluate"):
            client.post(f"/v1/sessions/{sid}/stages/{stage}", json={})
            state = wait_idle(client, sid)
            assert state["error"] is None
        manifest = client.get(f"/v1/sessions/{sid}/artifacts/manifest.l2d2").text
        lines = [l for l in manifest.splitlines()[1:] if l]
        import json as _json

        entries = {r["entry"]: r for r in map(_json.loads, lines)}
        assert set(entries) == {"compile", "train", "ground", "evaluate"}
        # The DAG chains: train consumes exactly what compile produced,
        # evaluate consumes what train and ground produced.
        assert (
            entries["train"]["inputs"]["reconstructed.l2d2"]
            == entries["compile"]["outputs"]["reconstructed.l2d2"]
        )
        assert (
            entries["evaluate"]["inputs"]["policy_drawings_only.model"]
            == entries["train"]["outputs"]["policy_drawings_only.model"]
        )
        assert (
            entries["evaluate"]["inputs"]["policy_grounded.model"]
            == entries["ground"]["outputs"]["policy_grounded.model"]
        )
