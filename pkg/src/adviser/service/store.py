"""On-disk persistence for instances and planning jobs.

Instances live under a content-hash id so re-ingesting identical files
is a no-op; job files are written atomically (tmp + rename) and survive
restarts byte-for-byte.
"""

from __future__ import annotations

import json
import os
import threading
from pathlib import Path

from ..serialize import canonical_json, content_hash

JOB_STATES = ("queued", "running", "done", "failed")
_TRANSITIONS = {
    "queued": {"running"},
    "running": {"done", "failed"},
    "done": set(),
    "failed": set(),
}


class StoreError(RuntimeError):
    pass


class Store:
    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)
        (self.root / "instances").mkdir(parents=True, exist_ok=True)
        (self.root / "jobs").mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    # -- instances ----------------------------------------------------

    def put_instance(self, files: dict[str, str], instance_json: str) -> str:
        """Persist raw uploads plus the canonical instance; the id is a
        hash of the canonical bytes, so ingestion is idempotent."""
        instance_id = content_hash(instance_json)
        folder = self.root / "instances" / instance_id
        if folder.exists():
            return instance_id
        tmp = folder.with_suffix(".tmp")
        if tmp.exists():
            for child in tmp.iterdir():
                child.unlink()
            tmp.rmdir()
        tmp.mkdir(parents=True)
        for name, text in files.items():
            (tmp / name).write_text(text)
        (tmp / "instance.json").write_text(instance_json)
        os.replace(tmp, folder)
        return instance_id

    def has_instance(self, instance_id: str) -> bool:
        return (self.root / "instances" / instance_id / "instance.json").exists()

    def get_instance_json(self, instance_id: str) -> str:
        path = self.root / "instances" / instance_id / "instance.json"
        if not path.exists():
            raise StoreError(f"unknown instance {instance_id}")
        return path.read_text()

    def list_instances(self) -> list[str]:
        return sorted(p.name for p in (self.root / "instances").iterdir() if p.is_dir())

    # -- jobs ----------------------------------------------------------

    def new_job(self, instance_id: str, overrides: dict) -> dict:
        with self._lock:
            existing = self.list_jobs()
            seq = 1 + max((int(j.split("-")[1]) for j in existing), default=0)
            job = {
                "job_id": f"job-{seq:06d}",
                "instance_id": instance_id,
                "overrides": overrides,
                "state": "queued",
                "error": None,
                "result": None,
            }
            self._write_job(job)
            return job

    def list_jobs(self) -> list[str]:
        return sorted(p.stem for p in (self.root / "jobs").glob("job-*.json"))

    def get_job(self, job_id: str) -> dict:
        path = self.root / "jobs" / f"{job_id}.json"
        if not path.exists():
            raise StoreError(f"unknown job {job_id}")
        return json.loads(path.read_text())

    def transition(self, job_id: str, state: str, *, error: str | None = None,
                   result: dict | None = None) -> dict:
        with self._lock:
            job = self.get_job(job_id)
            if state not in _TRANSITIONS.get(job["state"], set()):
                raise StoreError(f"illegal transition {job['state']} -> {state}")
            job["state"] = state
            if error is not None:
                job["error"] = error
            if result is not None:
                job["result"] = result
            self._write_job(job)
            return job

    def _write_job(self, job: dict) -> None:
        path = self.root / "jobs" / f"{job['job_id']}.json"
        tmp = path.with_suffix(".tmp")
        tmp.write_text(canonical_json(job))
        os.replace(tmp, path)
