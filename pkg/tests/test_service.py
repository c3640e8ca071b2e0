from __future__ import annotations

import hashlib
import json
import threading
import time

import pytest
from fastapi.testclient import TestClient

from medas.bundles import build_contour_bundle
from medas.graph import Direction, PortSpec, ResourceRequest, ToolCategory, ToolSpec
from medas.scheduler import Inventory, TaskState
from medas.service import Account, CorruptMetadata, ServiceState, create_app
from medas.tools import build_default_registry
from medas.values import SemanticType, TextVal

TOKEN = "secret-token"
AUTH = {"Authorization": f"Bearer {TOKEN}"}


def make_state(tmp_path, registry=None, gpus=2):
    accounts = {
        "alice": Account(
            "alice",
            hashlib.sha256(TOKEN.encode()).hexdigest(),
            ResourceRequest(cpu_cores=8, gpus=gpus, mem_mb=8192),
        )
    }
    return ServiceState(
        tmp_path / "data",
        inventory=Inventory.of(8, gpus, 8192),
        accounts=accounts,
        registry=registry,
    )


@pytest.fixture()
def service(tmp_path):
    state = make_state(tmp_path)
    return state, TestClient(create_app(state))


def tiny_pipeline() -> dict:
    return {
        "version": 1,
        "name": "tiny",
        "nodes": [
            {"id": "blobs", "tool": "medas.dataset.synthetic_blobs@1.0.0",
             "params": {"n_items": 2, "seed": 1}},
            {"id": "split", "tool": "medas.dataset.split@1.0.0", "params": {}},
        ],
        "edges": [{"from": "blobs.dataset", "to": "split.dataset"}],
        "metadata": {},
    }


def test_health_open_everything_else_authed(service):
    state, client = service
    assert client.get("/v1/health").status_code == 200
    protected = [
        ("GET", "/v1/tools"),
        ("POST", "/v1/validate"),
        ("POST", "/v1/pipelines"),
        ("GET", "/v1/pipelines"),
        ("GET", "/v1/pipelines/x"),
        ("POST", "/v1/tasks"),
        ("GET", "/v1/tasks"),
        ("GET", "/v1/tasks/x"),
        ("GET", "/v1/tasks/x/logs"),
        ("POST", "/v1/tasks/x/kill"),
        ("GET", "/v1/artifacts/abc"),
        ("POST", "/v1/datasets"),
        ("POST", "/v1/studies"),
        ("GET", "/v1/studies/x"),
        ("GET", "/v1/studies/x/trials"),
    ]
    for method, path in protected:
        resp = client.request(method, path, json={})
        assert resp.status_code == 401, f"{method} {path} not auth-guarded"
        resp = client.request(method, path, json={}, headers={"Authorization": "Bearer wrong"})
        assert resp.status_code == 401, f"{method} {path} accepts bad token"


def test_pipeline_roundtrip_hash(service):
    state, client = service
    resp = client.post("/v1/pipelines", json=tiny_pipeline(), headers=AUTH)
    assert resp.status_code == 200
    body = resp.json()
    raw = client.get(f"/v1/pipelines/{body['pipeline_id']}", headers=AUTH).content
    assert hashlib.sha256(raw).hexdigest() == body["content_hash"]


def test_validate_route_reports_diagnostics(service):
    state, client = service
    bad = tiny_pipeline()
    bad["edges"].append({"from": "split.train", "to": "blobs.dataset"})
    report = client.post("/v1/validate", json=bad, headers=AUTH).json()
    assert not report["ok"]
    codes = {d["code"] for d in report["diagnostics"]}
    assert "CycleDetected" in codes  # blobs has no input port -> also UnknownPort


def test_post_invalid_pipeline_400(service):
    state, client = service
    bad = tiny_pipeline()
    bad["nodes"][0]["tool"] = "medas.missing.tool@1.0.0"
    resp = client.post("/v1/pipelines", json=bad, headers=AUTH)
    assert resp.status_code == 400
    assert any(d["code"] == "UnknownTool" for d in resp.json()["detail"]["diagnostics"])


def test_task_lifecycle_and_unsatisfiable(service):
    state, client = service
    pid = client.post("/v1/pipelines", json=tiny_pipeline(), headers=AUTH).json()["pipeline_id"]
    resp = client.post(
        "/v1/tasks", json={"pipeline_id": pid, "request": {"cpu_cores": 1}}, headers=AUTH
    )
    tid = resp.json()["task"]["task_id"]
    assert state.wait_task(tid, timeout=60)
    meta = client.get(f"/v1/tasks/{tid}", headers=AUTH).json()
    assert meta["task"]["state"] == "Succeeded"
    assert set(meta["nodes"].values()) <= {"Succeeded", "CacheHit"}

    resp = client.post("/v1/tasks", json={"pipeline_id": pid, "request": {"gpus": 99}}, headers=AUTH)
    assert resp.status_code == 422


def test_idempotent_task_submission(service):
    state, client = service
    pid = client.post("/v1/pipelines", json=tiny_pipeline(), headers=AUTH).json()["pipeline_id"]
    h = {**AUTH, "Idempotency-Key": "alpha"}
    a = client.post("/v1/tasks", json={"pipeline_id": pid, "request": {"cpu_cores": 1}}, headers=h)
    b = client.post("/v1/tasks", json={"pipeline_id": pid, "request": {"cpu_cores": 1}}, headers=h)
    assert a.json()["task"]["task_id"] == b.json()["task"]["task_id"]
    state.wait_task(a.json()["task"]["task_id"], timeout=60)


def test_log_stream_matches_file(service):
    state, client = service
    pid = client.post("/v1/pipelines", json=tiny_pipeline(), headers=AUTH).json()["pipeline_id"]
    tid = client.post(
        "/v1/tasks", json={"pipeline_id": pid, "request": {"cpu_cores": 1}}, headers=AUTH
    ).json()["task"]["task_id"]
    state.wait_task(tid, timeout=60)
    streamed = [
        json.loads(l)
        for l in client.get(f"/v1/tasks/{tid}/logs?follow=1", headers=AUTH).text.splitlines()
        if l.strip()
    ]
    on_disk = [
        json.loads(l)
        for l in state.log_path(tid).read_text().splitlines()
        if l.strip()
    ]
    assert streamed == on_disk
    ts = [e["ts"] for e in streamed]
    assert ts == sorted(ts)


def test_kill_running_task(tmp_path):
    registry = build_default_registry()
    gate = threading.Event()

    def run(ctx):
        gate.wait(timeout=30)
        return {"x": TextVal("done")}

    registry.register(
        ToolSpec(
            tool_id="test.block.tool",
            version="1.0.0",
            category=ToolCategory.PRE_PROCESS,
            outputs=(PortSpec("x", Direction.OUT, SemanticType.TEXT),),
        ),
        run,
    )
    state = make_state(tmp_path, registry=registry)
    client = TestClient(create_app(state))
    body = {
        "version": 1, "name": "block",
        "nodes": [{"id": "b", "tool": "test.block.tool@1.0.0", "params": {}}],
        "edges": [], "metadata": {},
    }
    pid = client.post("/v1/pipelines", json=body, headers=AUTH).json()["pipeline_id"]
    tid = client.post(
        "/v1/tasks", json={"pipeline_id": pid, "request": {"cpu_cores": 1}}, headers=AUTH
    ).json()["task"]["task_id"]
    time.sleep(0.2)
    resp = client.post(f"/v1/tasks/{tid}/kill", headers=AUTH)
    assert resp.json()["task"]["state"] == "Killed"
    gate.set()
    resp = client.post(f"/v1/tasks/{tid}/kill", headers=AUTH)
    assert resp.status_code == 409  # already terminal


def test_dataset_upload_multipart(service):
    state, client = service
    import numpy as np

    from medas.tensorio import encode_tensor

    img = encode_tensor(np.zeros((4, 4), dtype=np.float32))
    files = [
        ("files", ("item1.image.mdt", img, "application/octet-stream")),
        ("files", ("item1.label.mdt", img, "application/octet-stream")),
        ("files", ("item2.image.mdt", img, "application/octet-stream")),
        ("files", ("item2.label.mdt", img, "application/octet-stream")),
    ]
    resp = client.post("/v1/datasets", files=files, headers=AUTH)
    assert resp.status_code == 200
    body = resp.json()
    assert body["items"] == 2
    raw = client.get(f"/v1/artifacts/{body['manifest']['hash']}", headers=AUTH)
    manifest = json.loads(raw.content)
    assert {i["item_id"] for i in manifest["items"]} == {"item1", "item2"}


def test_artifact_route_content_types(service):
    state, client = service
    ref = state.store.put(b"a,b\n1,2\n", __import__("medas.values", fromlist=["Media"]).Media.CSV)
    resp = client.get(f"/v1/artifacts/{ref.hash}", headers=AUTH)
    assert resp.status_code == 200
    assert resp.headers["content-type"].startswith("text/csv")
    assert client.get(f"/v1/artifacts/{'0'*64}", headers=AUTH).status_code == 404


def test_pagination_deterministic(service):
    state, client = service
    ids = []
    for i in range(25):
        body = tiny_pipeline()
        body["name"] = f"p{i:03d}"
        ids.append(client.post("/v1/pipelines", json=body, headers=AUTH).json()["pipeline_id"])
    page0 = client.get("/v1/pipelines?page=0&limit=10", headers=AUTH).json()["pipelines"]
    page0_again = client.get("/v1/pipelines?page=0&limit=10", headers=AUTH).json()["pipelines"]
    assert page0 == page0_again
    page1 = client.get("/v1/pipelines?page=1&limit=10", headers=AUTH).json()["pipelines"]
    assert len(page0) == 10 and len(page1) == 10
    assert {p["pipeline_id"] for p in page0}.isdisjoint({p["pipeline_id"] for p in page1})
    created = [p["created_at"] for p in page0 + page1]
    assert created == sorted(created)


def test_recovery_marks_running_interrupted(tmp_path):
    registry = build_default_registry()

    def run(ctx):  # blocks until the test process exits
        threading.Event().wait(120)
        return {"x": TextVal("never")}

    registry.register(
        ToolSpec(
            tool_id="test.hang.tool",
            version="1.0.0",
            category=ToolCategory.PRE_PROCESS,
            outputs=(PortSpec("x", Direction.OUT, SemanticType.TEXT),),
        ),
        run,
    )
    state_a = make_state(tmp_path, registry=registry)
    client = TestClient(create_app(state_a))
    body = {
        "version": 1, "name": "hang",
        "nodes": [{"id": "h", "tool": "test.hang.tool@1.0.0", "params": {}}],
        "edges": [], "metadata": {},
    }
    pid = client.post("/v1/pipelines", json=body, headers=AUTH).json()["pipeline_id"]
    tid = client.post(
        "/v1/tasks", json={"pipeline_id": pid, "request": {"cpu_cores": 1}}, headers=AUTH
    ).json()["task"]["task_id"]
    time.sleep(0.3)
    assert state_a.get_task(tid)["task"]["state"] == "Running"

    # Simulated crash: a fresh state over the same directory; the old worker
    # thread is left hanging and never completes.
    state_b = make_state(tmp_path, registry=build_default_registry())
    meta = state_b.get_task(tid)
    assert meta["task"]["state"] == "Failed"
    assert meta["task"]["reason"] == "Interrupted"

    # Resubmission works and the task listing survives.
    client_b = TestClient(create_app(state_b))
    listing = client_b.get("/v1/tasks", headers=AUTH).json()["tasks"]
    assert any(t["task"]["task_id"] == tid for t in listing)


def test_corrupt_metadata_refuses_start(tmp_path):
    state = make_state(tmp_path)
    (state.meta_dir / "tasks" / "bad.json").write_text("{nonsense")
    with pytest.raises(CorruptMetadata):
        make_state(tmp_path)


def test_study_endpoint_small(service):
    state, client = service
    template = {
        "version": 1,
        "name": "study-template",
        "nodes": [
            {"id": "blobs", "tool": "medas.dataset.synthetic_blobs@1.0.0",
             "params": {"n_items": 4, "seed": 2}},
            {"id": "split", "tool": "medas.dataset.split@1.0.0", "params": {"ratio": 0.5, "seed": 1}},
            {"id": "train", "tool": "medas.model.train@1.0.0",
             "params": {"epochs": 2, "learning_rate": 0.3}},
            {"id": "pred", "tool": "medas.model.predict_dataset@1.0.0", "params": {}},
            {"id": "bn", "tool": "medas.dataset.binary_normalize@1.0.0", "params": {}},
            {"id": "dice", "tool": "medas.metric.mean_dice@1.0.0", "params": {}},
        ],
        "edges": [
            {"from": "blobs.dataset", "to": "split.dataset"},
            {"from": "split.train", "to": "train.train"},
            {"from": "split.test", "to": "pred.dataset"},
            {"from": "train.model", "to": "pred.model"},
            {"from": "pred.dataset", "to": "bn.dataset"},
            {"from": "bn.dataset", "to": "dice.dataset"},
        ],
        "metadata": {},
    }
    pid = client.post("/v1/pipelines", json=template, headers=AUTH).json()["pipeline_id"]
    config = {
        "space": [{"kind": "integer", "name": "epochs", "low": 1, "high": 6}],
        "bindings": {"epochs": "train.epochs"},
        "budget": 3,
        "metric": "mean_dice",
        "pipeline_id": pid,
        "seed": 4,
    }
    sid = client.post("/v1/studies", json=config, headers=AUTH).json()["study_id"]
    deadline = time.time() + 120
    while time.time() < deadline:
        body = client.get(f"/v1/studies/{sid}", headers=AUTH).json()
        if body["status"] != "running":
            break
        time.sleep(0.3)
    assert body["status"] == "finished"
    assert len([t for t in body["study"]["trials"] if t["state"] == "Completed"]) == 3
    assert "best" in body
    csv_text = client.get(f"/v1/studies/{sid}/trials", headers=AUTH).text
    assert csv_text.splitlines()[0] == "trial_id,epochs,y,state"
