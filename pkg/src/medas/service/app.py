"""HTTP facade over the service state: the backend for the CLI and web editor."""

from __future__ import annotations

import json
import time
from typing import Any

from fastapi import Depends, FastAPI, Header, HTTPException, Request, Response, UploadFile
from fastapi.responses import StreamingResponse

from ..graph import PipelineGraph, ResourceRequest, validate_graph
from ..scheduler import AlreadyTerminal, SchedulerError, UnknownAccount, UnknownTask
from ..store import NotFound
from ..tensorio import MAGIC as TENSOR_MAGIC
from ..values import COERCIONS, DatasetItem, DatasetManifest, Media
from .state import Account, CorruptMetadata, ServiceState, UnknownId

LATTICE_VERSION = 1

_MEDIA_CONTENT_TYPES = {
    Media.MD_TENSOR: "application/octet-stream",
    Media.PNG: "image/png",
    Media.CSV: "text/csv",
    Media.JSON: "application/json",
}

_EXT_MEDIA = {
    "mdt": Media.MD_TENSOR,
    "png": Media.PNG,
    "csv": Media.CSV,
    "json": Media.JSON,
}


def _sniff_media(data: bytes) -> Media:
    if data[:4] == TENSOR_MAGIC:
        return Media.MD_TENSOR
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        return Media.PNG
    if data.lstrip()[:1] in (b"{", b"["):
        return Media.JSON
    return Media.CSV


def create_app(state: ServiceState) -> FastAPI:
    app = FastAPI(title="medas", version="0.1.0")

    def auth(authorization: str | None = Header(default=None)) -> Account:
        token = None
        if authorization and authorization.lower().startswith("bearer "):
            token = authorization[7:].strip()
        account = state.authenticate(token)
        if account is None:
            raise HTTPException(status_code=401, detail="missing or invalid token")
        return account

    @app.get("/v1/health")
    def health() -> dict[str, Any]:
        return {"status": "ok", "ts": time.time()}

    @app.get("/v1/tools")
    def tools(account: Account = Depends(auth)) -> dict[str, Any]:
        return {
            "tools": [spec.to_json() for spec in state.registry.specs()],
            "lattice_version": LATTICE_VERSION,
            "coercions": sorted([src.value, dst.value] for src, dst in COERCIONS),
        }

    @app.post("/v1/validate")
    def validate(body: dict, account: Account = Depends(auth)) -> dict[str, Any]:
        try:
            graph = PipelineGraph.from_json(body)
        except (KeyError, ValueError, TypeError) as exc:
            raise HTTPException(status_code=400, detail=f"malformed pipeline: {exc}")
        return validate_graph(graph, state.registry).to_json()

    @app.post("/v1/pipelines")
    def post_pipeline(body: dict, account: Account = Depends(auth)) -> dict[str, Any]:
        try:
            stored, report = state.put_pipeline(body, owner=account.account_id)
        except (KeyError, ValueError, TypeError) as exc:
            raise HTTPException(status_code=400, detail=f"malformed pipeline: {exc}")
        if stored is None:
            raise HTTPException(status_code=400, detail=report.to_json())
        return {
            "pipeline_id": stored.pipeline_id,
            "content_hash": stored.content_hash,
            "logical_hash": stored.logical_hash,
        }

    @app.get("/v1/pipelines")
    def list_pipelines(
        page: int = 0, limit: int = 50, account: Account = Depends(auth)
    ) -> dict[str, Any]:
        return {"pipelines": state.list_pipelines(page=page, limit=limit)}

    @app.get("/v1/pipelines/{pipeline_id}")
    def get_pipeline(pipeline_id: str, account: Account = Depends(auth)) -> Response:
        try:
            stored = state.get_pipeline(pipeline_id)
        except UnknownId:
            raise HTTPException(status_code=404, detail=f"unknown pipeline {pipeline_id}")
        return Response(content=stored.body, media_type="application/json")

    @app.post("/v1/tasks")
    def post_task(
        body: dict,
        account: Account = Depends(auth),
        idempotency_key: str | None = Header(default=None, alias="Idempotency-Key"),
    ) -> dict[str, Any]:
        request = ResourceRequest.from_json(body.get("request", {"cpu_cores": 1}))
        try:
            meta = state.submit_task(
                account.account_id,
                body["pipeline_id"],
                request,
                seed=int(body.get("seed", 0)),
                idempotency_key=idempotency_key,
            )
        except UnknownId as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except (UnknownAccount, SchedulerError) as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        task = meta["task"]
        if task["state"] == "Failed" and task["reason"] == "Unsatisfiable":
            raise HTTPException(
                status_code=422,
                detail={"task_id": task["task_id"], "reason": "Unsatisfiable"},
            )
        return meta

    @app.get("/v1/tasks")
    def list_tasks(account: Account = Depends(auth)) -> dict[str, Any]:
        return {"tasks": state.list_tasks()}

    @app.get("/v1/tasks/{task_id}")
    def get_task(task_id: str, account: Account = Depends(auth)) -> dict[str, Any]:
        try:
            return state.get_task(task_id)
        except UnknownId:
            raise HTTPException(status_code=404, detail=f"unknown task {task_id}")

    @app.get("/v1/tasks/{task_id}/logs")
    def task_logs(
        task_id: str, follow: int = 0, account: Account = Depends(auth)
    ) -> StreamingResponse:
        try:
            state.get_task(task_id)
        except UnknownId:
            raise HTTPException(status_code=404, detail=f"unknown task {task_id}")

        def stream():
            path = state.log_path(task_id)
            offset = 0
            while True:
                if path.exists():
                    with open(path, "r", encoding="utf-8") as fh:
                        fh.seek(offset)
                        chunk = fh.read()
                        offset = fh.tell()
                    # Only whole lines: hold back a trailing partial write.
                    if chunk and not chunk.endswith("\n"):
                        cut = chunk.rfind("\n") + 1
                        offset -= len(chunk[cut:].encode("utf-8"))
                        chunk = chunk[:cut]
                    if chunk:
                        yield chunk
                if not follow or state.task_terminal(task_id):
                    # Final drain for lines written between read and state check.
                    if path.exists():
                        with open(path, "r", encoding="utf-8") as fh:
                            fh.seek(offset)
                            rest = fh.read()
                        if rest:
                            yield rest
                    return
                time.sleep(0.05)

        return StreamingResponse(stream(), media_type="application/x-ndjson")

    @app.post("/v1/tasks/{task_id}/kill")
    def kill_task(task_id: str, account: Account = Depends(auth)) -> dict[str, Any]:
        try:
            return state.kill_task(task_id)
        except UnknownId:
            raise HTTPException(status_code=404, detail=f"unknown task {task_id}")
        except (AlreadyTerminal, UnknownTask) as exc:
            raise HTTPException(status_code=409, detail=str(exc))

    @app.get("/v1/artifacts/{digest}")
    def get_artifact(digest: str, account: Account = Depends(auth)) -> Response:
        try:
            data = state.store.get(digest)
        except NotFound:
            raise HTTPException(status_code=404, detail=f"unknown artifact {digest}")
        media = _sniff_media(data)
        return Response(content=data, media_type=_MEDIA_CONTENT_TYPES[media])

    @app.post("/v1/datasets")
    async def post_dataset(
        request: Request, account: Account = Depends(auth)
    ) -> dict[str, Any]:
        form = await request.form()
        items: dict[str, dict[str, Any]] = {}
        for _, value in form.multi_items():
            if not isinstance(value, UploadFile):
                continue
            name = value.filename or ""
            parts = name.split(".")
            if len(parts) < 3:
                raise HTTPException(
                    status_code=400,
                    detail=f"filename {name!r} must look like <item_id>.<role>.<ext>",
                )
            item_id, role, ext = ".".join(parts[:-2]), parts[-2], parts[-1]
            media = _EXT_MEDIA.get(ext.lower())
            if media is None:
                raise HTTPException(status_code=400, detail=f"unknown extension .{ext}")
            data = await value.read()
            ref = state.store.put(data, media)
            items.setdefault(item_id, {})[role] = ref
        if not items:
            raise HTTPException(status_code=400, detail="no files uploaded")
        try:
            manifest = DatasetManifest(
                items=tuple(
                    DatasetItem(item_id=iid, roles=roles)
                    for iid, roles in sorted(items.items())
                )
            )
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        ref = state.store.put_manifest(manifest)
        return {"manifest": ref.to_json(), "items": len(manifest.items)}

    @app.post("/v1/studies")
    def post_study(body: dict, account: Account = Depends(auth)) -> dict[str, Any]:
        try:
            rec = state.create_study(account.account_id, body)
        except UnknownId as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except (KeyError, ValueError, TypeError) as exc:
            raise HTTPException(status_code=400, detail=f"bad study config: {exc}")
        return {"study_id": rec.study_id, "status": rec.status}

    @app.get("/v1/studies/{study_id}")
    def get_study(study_id: str, account: Account = Depends(auth)) -> dict[str, Any]:
        try:
            rec = state.get_study(study_id)
        except UnknownId:
            raise HTTPException(status_code=404, detail=f"unknown study {study_id}")
        out = {
            "study_id": rec.study_id,
            "status": rec.status,
            "config": rec.config,
            "created_at": rec.created_at,
            "study": rec.study_json,
        }
        if rec.study_json:
            completed = [t for t in rec.study_json["trials"] if t["state"] == "Completed"]
            if completed:
                best = max(completed, key=lambda t: t["y"])
                out["best"] = best
        return out

    @app.get("/v1/studies/{study_id}/trials")
    def get_trials(study_id: str, account: Account = Depends(auth)) -> Response:
        from ..hpo import Study

        try:
            rec = state.get_study(study_id)
        except UnknownId:
            raise HTTPException(status_code=404, detail=f"unknown study {study_id}")
        if not rec.study_json:
            return Response(content="", media_type="text/csv")
        study = Study.from_json(rec.study_json)
        return Response(content=study.trials_csv(), media_type="text/csv")

    return app
