"""In-process job registry: one worker thread per submitted run or preset.

Jobs are plain threads rather than an external queue — the service targets
desk-scale runs on a single machine, and a crashed job must not take the
service down with it.  The registry is the single source of truth for job
state; transitions are lock-protected and monotone (pending -> running ->
done/failed).
"""

from __future__ import annotations

import dataclasses
import itertools
import threading
import time
import traceback
from pathlib import Path
from typing import Optional


@dataclasses.dataclass
class JobRecord:
    id: str
    kind: str                     ## "run" | "preset"
    name: str                     ## run label or preset name
    state: str = "pending"
    passed: Optional[bool] = None
    error: Optional[str] = None
    output_dir: Optional[str] = None
    created_at: float = dataclasses.field(default_factory=time.time)
    finished_at: Optional[float] = None
    result: object = None         ## RunResult | PresetResult once done


class JobRegistry:
    """Submit, track, and enumerate background jobs."""

    def __init__(self, base_dir="runs"):
        self.base_dir = Path(base_dir)
        self._lock = threading.Lock()
        self._jobs: dict[str, JobRecord] = {}
        self._counter = itertools.count(1)

    def _new_id(self, kind: str) -> str:
        return f"{kind}-{next(self._counter):04d}"

    def submit(self, kind: str, name: str, fn) -> JobRecord:
        """Start `fn(job) -> result-with-passed` on a worker thread.

        The fresh job record is handed to `fn` so the work function can name
        its artifact directory after the job id.
        """
        with self._lock:
            job = JobRecord(id=self._new_id(kind), kind=kind, name=name)
            self._jobs[job.id] = job

        def worker():
            with self._lock:
                job.state = "running"
            try:
                result = fn(job)
                with self._lock:
                    job.result = result
                    job.passed = bool(result.passed)
                    job.output_dir = str(result.output_dir)
                    job.state = "done"
            except Exception as exc:  ## a failed job must not kill the service
                with self._lock:
                    job.error = "".join(traceback.format_exception_only(exc)).strip()
                    job.state = "failed"
            finally:
                with self._lock:
                    job.finished_at = time.time()

        threading.Thread(target=worker, name=f"job-{job.id}", daemon=True).start()
        return job

    def job_dir(self, job_id: str) -> Path:
        return self.base_dir / job_id

    def get(self, job_id: str) -> Optional[JobRecord]:
        with self._lock:
            return self._jobs.get(job_id)

    def list(self) -> list[JobRecord]:
        with self._lock:
            return sorted(self._jobs.values(), key=lambda j: j.created_at)
