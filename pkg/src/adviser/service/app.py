"""Planning HTTP API.

One background worker executes jobs in submission order; endpoints never
hand out an allocation that fails validation. Errors use a uniform
``{code, message, detail}`` body.
"""

from __future__ import annotations

import json
import logging
import os
import queue
import threading
from contextlib import asynccontextmanager
from dataclasses import replace
from email import message_from_bytes
from email.policy import HTTP as HTTP_POLICY
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from ..baselines import HilpConfig, RwbConfig, hilp_allocate, rwb_allocate
from ..domain import ConfigError, money, validate_allocation
from ..pipeline import adviser_plan, plan_config_from_dict
from ..serialize import allocation_to_dict, canonical_json, instance_from_dict, instance_to_dict
from .ingest import SchemaError, ValidationError, parse_instance_files
from .store import Store, StoreError

log = logging.getLogger(__name__)

WHATIF_SYNC_LIMIT = 300  # mothers; larger instances plan asynchronously


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str, detail=None):
        self.status = status
        self.code = code
        self.message = message
        self.detail = detail


class PlanRequest(BaseModel):
    instance_id: str
    overrides: dict = {}


class WhatIfRequest(BaseModel):
    instance_id: str
    overrides: dict = {}


def _apply_overrides(instance, overrides: dict):
    changes = {}
    if "budget_units" in overrides:
        changes["budget"] = money(overrides["budget_units"])
    if "budget_tenths" in overrides:
        changes["budget"] = int(overrides["budget_tenths"])
    if "drive_cap" in overrides:
        changes["drive_cap"] = overrides["drive_cap"]
    if "fleet_size" in overrides:
        n = int(overrides["fleet_size"])
        if n < 0:
            raise ConfigError("fleet_size must be >= 0")
        buses = tuple(instance.fleet.buses[i % max(1, len(instance.fleet.buses))]
                      for i in range(n)) if instance.fleet.buses else ()
        buses = tuple(replace(b, id=i) for i, b in enumerate(buses))
        changes["fleet"] = replace(instance.fleet, buses=buses)
    out = replace(instance, **changes) if changes else instance
    if out.budget < 0:
        raise ConfigError("budget must be >= 0")
    return out


def _execute(instance, overrides: dict) -> dict:
    method = overrides.get("method", "adviser")
    plan_cfg = plan_config_from_dict(overrides.get("plan"))
    if method == "adviser":
        allocation, details = adviser_plan(instance, None, plan_cfg)
        solver = {"status": details.solver_status, "gap": details.solver_gap}
    elif method == "hilp":
        allocation = hilp_allocate(instance, instance.probabilities,
                                   HilpConfig(pool=plan_cfg.pool, build=plan_cfg.build,
                                              solve=plan_cfg.solve, seed=0))
        solver = None
    elif method == "rwb":
        allocation = rwb_allocate(instance, instance.probabilities, RwbConfig())
        solver = None
    else:
        raise ConfigError(f"unknown method {method!r}")
    violations = validate_allocation(instance, allocation)
    if violations:
        raise ConfigError(f"planner produced an invalid allocation: {violations[:3]}")
    return {
        "method": method,
        "budget_tenths": instance.budget,
        "objective": float(allocation.objective),
        "cost_tenths": int(allocation.total_cost),
        "counts": allocation.counts(),
        "solver": solver,
        "allocation": allocation_to_dict(instance, allocation),
    }


class Worker(threading.Thread):
    def __init__(self, store: Store, queue_size: int = 0):
        super().__init__(daemon=True)
        self.store = store
        self.queue: "queue.Queue[str | None]" = queue.Queue(maxsize=queue_size)
        # resume anything that never ran before the last shutdown
        for job_id in store.list_jobs():
            if store.get_job(job_id)["state"] == "queued":
                self.queue.put(job_id)

    def submit(self, job_id: str):
        try:
            self.queue.put_nowait(job_id)
        except queue.Full:
            raise ApiError(429, "queue_full", "planner queue is full; retry later")

    def stop(self):
        self.queue.put(None)

    def run(self):
        while True:
            job_id = self.queue.get()
            if job_id is None:
                return
            try:
                job = self.store.get_job(job_id)
                if job["state"] != "queued":
                    continue
                self.store.transition(job_id, "running")
                instance = instance_from_dict(json.loads(
                    self.store.get_instance_json(job["instance_id"])))
                instance = _apply_overrides(instance, job["overrides"])
                result = _execute(instance, job["overrides"])
                self.store.transition(job_id, "done", result=result)
            except Exception as exc:  # failures land in the job record
                log.exception("job %s failed", job_id)
                try:
                    self.store.transition(job_id, "failed", error=str(exc))
                except StoreError:
                    pass


def _parse_multipart(content_type: str, body: bytes) -> dict[str, bytes]:
    header = f"Content-Type: {content_type}\r\nMIME-Version: 1.0\r\n\r\n".encode()
    msg = message_from_bytes(header + body, policy=HTTP_POLICY)
    if not msg.is_multipart():
        raise ApiError(400, "bad_request", "expected multipart/form-data")
    parts = {}
    for part in msg.iter_parts():
        name = part.get_param("name", header="content-disposition")
        if name:
            parts[name] = part.get_payload(decode=True) or b""
    return parts


def create_app(data_dir: str | None = None, ui_dir: str | None = None,
               queue_size: int = 0) -> FastAPI:
    root = Path(data_dir or os.environ.get("ADVISER_DATA_DIR", "adviser-data"))
    store = Store(root)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        app.state.worker = Worker(store, queue_size=queue_size)
        app.state.worker.start()
        yield
        app.state.worker.stop()
        app.state.worker.join(timeout=30)

    app = FastAPI(title="adviser planning service", lifespan=lifespan)
    app.state.store = store
    app.state.worker = None

    @app.exception_handler(ApiError)
    async def _api_error(_req: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status, content={
            "code": exc.code, "message": exc.message, "detail": exc.detail})

    @app.post("/instances")
    async def upload_instance(request: Request):
        content_type = request.headers.get("content-type", "")
        body = await request.body()
        if content_type.startswith("multipart/form-data"):
            parts = _parse_multipart(content_type, body)
            required = ("mothers", "centers", "depots", "config")
            missing = [k for k in required if k not in parts]
            if missing:
                raise ApiError(400, "bad_request", f"missing upload fields: {missing}")
            mothers_csv = parts["mothers"].decode()
            centers_csv = parts["centers"].decode()
            depots_csv = parts["depots"].decode()
            try:
                config = json.loads(parts["config"].decode())
            except json.JSONDecodeError as exc:
                raise ApiError(400, "bad_request", f"config.json does not parse: {exc}")
        elif content_type.startswith("application/json"):
            data = json.loads(body)
            try:
                mothers_csv = data["mothers_csv"]
                centers_csv = data["centers_csv"]
                depots_csv = data["depots_csv"]
                config = data.get("config", {})
            except KeyError as exc:
                raise ApiError(400, "bad_request", f"missing field {exc}")
        else:
            raise ApiError(415, "unsupported_media_type",
                           "send multipart/form-data or application/json")

        try:
            instance = parse_instance_files(mothers_csv, centers_csv, depots_csv, config)
        except SchemaError as exc:
            raise ApiError(400, "schema_error", str(exc))
        except ValidationError as exc:
            raise ApiError(422, "validation_error", "instance failed validation",
                           detail=[str(v) for v in exc.violations[:20]])
        instance_json = canonical_json(instance_to_dict(instance))
        instance_id = store.put_instance(
            {"mothers.csv": mothers_csv, "centers.csv": centers_csv,
             "depots.csv": depots_csv, "config.json": json.dumps(config, sort_keys=True)},
            instance_json)
        return {"instance_id": instance_id, "mothers": len(instance.mothers)}

    @app.get("/instances")
    def list_instances():
        return {"instances": store.list_instances()}

    @app.get("/instances/{instance_id}")
    def get_instance(instance_id: str):
        try:
            data = json.loads(store.get_instance_json(instance_id))
        except StoreError as exc:
            raise ApiError(404, "not_found", str(exc))
        return {
            "instance_id": instance_id,
            "mothers": len(data["mothers"]),
            "centers": len(data["centers"]),
            "depots": len(data["depots"]),
            "horizon": data["horizon"],
            "budget_tenths": data["budget_tenths"],
            "drive_cap": data.get("drive_cap"),
            "fleet_size": len(data["fleet"]["buses"]),
            "grid": data["grid"],
        }

    @app.get("/instances/{instance_id}/full")
    def get_instance_full(instance_id: str):
        try:
            return json.loads(store.get_instance_json(instance_id))
        except StoreError as exc:
            raise ApiError(404, "not_found", str(exc))

    def _submit(instance_id: str, overrides: dict) -> dict:
        if not store.has_instance(instance_id):
            raise ApiError(404, "not_found", f"unknown instance {instance_id}")
        try:
            instance = instance_from_dict(json.loads(store.get_instance_json(instance_id)))
            _apply_overrides(instance, overrides)  # fail fast on bad overrides
        except ConfigError as exc:
            raise ApiError(400, "config_error", str(exc))
        job = store.new_job(instance_id, overrides)
        app.state.worker.submit(job["job_id"])
        return job

    @app.post("/plans")
    def submit_plan(req: PlanRequest):
        return _submit(req.instance_id, req.overrides)

    @app.get("/plans")
    def list_plans():
        return {"jobs": [store.get_job(j) | {"result": None} for j in store.list_jobs()]}

    @app.get("/plans/{job_id}")
    def get_plan(job_id: str):
        try:
            return store.get_job(job_id)
        except StoreError as exc:
            raise ApiError(404, "not_found", str(exc))

    @app.get("/plans/{job_id}/allocation")
    def get_allocation(job_id: str):
        try:
            job = store.get_job(job_id)
        except StoreError as exc:
            raise ApiError(404, "not_found", str(exc))
        if job["state"] != "done":
            raise ApiError(409, "not_ready", f"job is {job['state']}")
        return job["result"]["allocation"]

    @app.post("/whatif")
    def whatif(req: WhatIfRequest):
        if not store.has_instance(req.instance_id):
            raise ApiError(404, "not_found", f"unknown instance {req.instance_id}")
        data = json.loads(store.get_instance_json(req.instance_id))
        if len(data["mothers"]) <= WHATIF_SYNC_LIMIT:
            try:
                instance = _apply_overrides(instance_from_dict(data), req.overrides)
                result = _execute(instance, req.overrides)
            except ConfigError as exc:
                raise ApiError(400, "config_error", str(exc))
            job = store.new_job(req.instance_id, req.overrides)
            store.transition(job["job_id"], "running")
            return store.transition(job["job_id"], "done", result=result)
        return _submit(req.instance_id, req.overrides)

    ui_path = Path(ui_dir) if ui_dir else Path(__file__).resolve().parents[3] / "frontend" / "dist"
    if ui_path.is_dir():
        app.mount("/ui", StaticFiles(directory=str(ui_path), html=True), name="ui")
    else:
        @app.get("/ui")
        def ui_placeholder():
            return {"message": "UI assets not built; run `npm run build` in frontend/"}

    return app
