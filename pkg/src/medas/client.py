"""Thin HTTP client for remote mode (used by the CLI)."""

from __future__ import annotations

import json
from typing import Any, Iterator, Mapping

import httpx


class TransportError(Exception):
    """Connection/auth faults; maps to CLI exit code 3."""


class UnsatisfiableError(Exception):
    """Server rejected the resource request (422); maps to exit code 4."""


class ApiClient:
    def __init__(self, base_url: str, token: str, timeout: float = 60.0) -> None:
        self.base_url = base_url.rstrip("/")
        self._client = httpx.Client(
            base_url=self.base_url,
            headers={"Authorization": f"Bearer {token}"},
            timeout=timeout,
        )

    def _request(self, method: str, path: str, **kwargs: Any) -> httpx.Response:
        try:
            resp = self._client.request(method, path, **kwargs)
        except httpx.HTTPError as exc:
            raise TransportError(f"cannot reach server: {exc}") from exc
        if resp.status_code == 401:
            raise TransportError("authentication failed (401)")
        if resp.status_code == 422:
            raise UnsatisfiableError(resp.text)
        if resp.status_code >= 400:
            raise httpx.HTTPStatusError(
                f"{resp.status_code}: {resp.text}", request=resp.request, response=resp
            )
        return resp

    def tools(self) -> dict[str, Any]:
        return self._request("GET", "/v1/tools").json()

    def validate(self, pipeline: Mapping[str, Any]) -> dict[str, Any]:
        return self._request("POST", "/v1/validate", json=dict(pipeline)).json()

    def put_pipeline(self, pipeline: Mapping[str, Any]) -> dict[str, Any]:
        return self._request("POST", "/v1/pipelines", json=dict(pipeline)).json()

    def get_pipeline(self, pipeline_id: str) -> bytes:
        return self._request("GET", f"/v1/pipelines/{pipeline_id}").content

    def submit_task(
        self,
        pipeline_id: str,
        request: Mapping[str, int],
        seed: int = 0,
        idempotency_key: str | None = None,
    ) -> dict[str, Any]:
        headers = {}
        if idempotency_key:
            headers["Idempotency-Key"] = idempotency_key
        return self._request(
            "POST",
            "/v1/tasks",
            json={"pipeline_id": pipeline_id, "request": dict(request), "seed": seed},
            headers=headers,
        ).json()

    def task(self, task_id: str) -> dict[str, Any]:
        return self._request("GET", f"/v1/tasks/{task_id}").json()

    def kill(self, task_id: str) -> dict[str, Any]:
        return self._request("POST", f"/v1/tasks/{task_id}/kill").json()

    def stream_logs(self, task_id: str, follow: bool = False) -> Iterator[dict[str, Any]]:
        try:
            with self._client.stream(
                "GET", f"/v1/tasks/{task_id}/logs", params={"follow": int(follow)}, timeout=None
            ) as resp:
                if resp.status_code >= 400:
                    raise TransportError(f"log stream failed: {resp.status_code}")
                for line in resp.iter_lines():
                    if line.strip():
                        yield json.loads(line)
        except httpx.HTTPError as exc:
            raise TransportError(f"log stream aborted: {exc}") from exc

    def create_study(self, config: Mapping[str, Any]) -> dict[str, Any]:
        return self._request("POST", "/v1/studies", json=dict(config)).json()

    def study(self, study_id: str) -> dict[str, Any]:
        return self._request("GET", f"/v1/studies/{study_id}").json()

    def trials_csv(self, study_id: str) -> bytes:
        return self._request("GET", f"/v1/studies/{study_id}/trials").content
