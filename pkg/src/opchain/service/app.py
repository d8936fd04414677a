"""HTTP service wrapping the run orchestration.

Endpoints:
  GET  /health                      liveness + package version
  GET  /presets                     named run bundles shipped with the package
  POST /runs                        submit a config or preset; returns the job
  GET  /runs                        all jobs, oldest first
  GET  /runs/{job_id}               job state plus result summary when done
  GET  /runs/{job_id}/artifacts     artifact file names of a finished job
  GET  /runs/{job_id}/artifacts/{name}   one artifact file
  POST /compare                     column-wise CSV comparison

Jobs execute on worker threads inside the service process; artifacts are
written under base_dir/<job_id>/ unless the request names a directory.
"""

from __future__ import annotations

import math
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.responses import FileResponse

from .. import __version__
from ..runner import (ConfigError, _validate_config, compare_csv, list_presets,
                      load_preset, run, run_preset)
from .jobs import JobRegistry
from .models import (CompareRequest, CompareResponse, JobDetail, JobInfo,
                     PresetInfo, RunRequest)


def _json_safe(obj):
    """Replace non-finite floats so responses remain strict JSON."""
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def _job_info(job) -> JobInfo:
    return JobInfo(id=job.id, kind=job.kind, name=job.name, state=job.state,
                   passed=job.passed, error=job.error,
                   output_dir=job.output_dir, created_at=job.created_at,
                   finished_at=job.finished_at)


def _job_summary(job):
    if job.state != "done":
        return None
    result = job.result
    if job.kind == "run":
        return _json_safe(result.manifest)
    return _json_safe({
        "preset": result.spec.name,
        "passed": result.passed,
        "runs": {label: res.passed for label, res in result.results.items()},
        "checks": result.checks,
    })


def create_app(base_dir="runs") -> FastAPI:
    app = FastAPI(title="opchain", version=__version__)
    registry = JobRegistry(base_dir=base_dir)
    app.state.registry = registry

    @app.get("/health")
    def health():
        return {"status": "ok", "version": __version__}

    @app.get("/presets", response_model=list[PresetInfo])
    def presets():
        out = []
        for name in list_presets():
            spec = load_preset(name)
            out.append(PresetInfo(name=name, description=spec.description,
                                  n_runs=len(spec.runs),
                                  labels=[cfg.label for cfg in spec.runs]))
        return out

    @app.post("/runs", response_model=JobInfo, status_code=202)
    def submit(request: RunRequest):
        try:
            if request.preset is not None:
                spec = load_preset(request.preset)

                def execute(job):
                    out_dir = request.output_dir or str(registry.job_dir(job.id))
                    return run_preset(spec, output_dir=out_dir,
                                      threads=request.threads)

                job = registry.submit("preset", spec.name, execute)
            else:
                config = _validate_config(request.config)

                def execute(job):
                    out_dir = request.output_dir or str(registry.job_dir(job.id))
                    return run(config, output_dir=out_dir,
                               threads=request.threads)

                job = registry.submit("run", config.label, execute)
        except ConfigError as exc:
            raise HTTPException(status_code=422, detail=exc.problems)
        return _job_info(job)

    @app.get("/runs", response_model=list[JobInfo])
    def all_jobs():
        return [_job_info(job) for job in registry.list()]

    def _get_job(job_id: str):
        job = registry.get(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail=f"no such job: {job_id}")
        return job

    @app.get("/runs/{job_id}", response_model=JobDetail)
    def job_detail(job_id: str):
        job = _get_job(job_id)
        info = _job_info(job)
        return JobDetail(**info.model_dump(), summary=_job_summary(job))

    @app.get("/runs/{job_id}/artifacts")
    def artifacts(job_id: str):
        job = _get_job(job_id)
        if job.output_dir is None:
            return {"files": []}
        root = Path(job.output_dir)
        files = sorted(p.name for p in root.iterdir() if p.is_file())
        return {"files": files}

    @app.get("/runs/{job_id}/artifacts/{name}")
    def artifact(job_id: str, name: str):
        job = _get_job(job_id)
        if job.output_dir is None:
            raise HTTPException(status_code=404, detail="job has no artifacts")
        root = Path(job.output_dir).resolve()
        path = (root / name).resolve()
        ## artifacts live flat in the job directory; refuse anything else
        if path.parent != root or not path.is_file():
            raise HTTPException(status_code=404, detail=f"no such artifact: {name}")
        media = ("application/json" if name.endswith(".json")
                 else "text/csv" if name.endswith(".csv")
                 else "application/octet-stream")
        return FileResponse(path, media_type=media, filename=name)

    @app.post("/compare", response_model=CompareResponse)
    def compare(request: CompareRequest):
        for p in (request.path_a, request.path_b):
            if not Path(p).is_file():
                raise HTTPException(status_code=404, detail=f"no such file: {p}")
        return CompareResponse(**_json_safe(compare_csv(request.path_a,
                                                        request.path_b,
                                                        request.tol)))

    return app
