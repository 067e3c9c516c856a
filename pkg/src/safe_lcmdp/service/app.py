"""FastAPI application exposing the simulator to thin clients."""

from __future__ import annotations

import tempfile
from pathlib import Path

from fastapi import FastAPI, HTTPException

from .. import __version__, envs
from ..cmdp import env_to_json
from ..exceptions import InvalidInputError
from ..harness import summarize_logs
from ..metrics import MetricsLog
from .jobs import JobManager
from .models import (
    ExperimentRequest,
    ExperimentStatus,
    FileContent,
    FileList,
    GenerateEnvRequest,
    GenerateEnvResponse,
    HealthResponse,
    JobCreated,
    SeedOutcome,
    SummarizeRequest,
    SummarizeResponse,
)


def create_app(workdir: str | Path | None = None) -> FastAPI:
    if workdir is None:
        workdir = Path(tempfile.mkdtemp(prefix="safe-lcmdp-"))
    app = FastAPI(title="safe-lcmdp", version=__version__)
    jobs = JobManager(Path(workdir))
    app.state.jobs = jobs

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.post("/envs/generate", response_model=GenerateEnvResponse)
    def generate_env(req: GenerateEnvRequest) -> GenerateEnvResponse:
        params = {}
        if req.num_states is not None:
            params["num_states"] = req.num_states
        if req.d is not None:
            params["d"] = req.d
        try:
            cmdp, safe = envs.generate(req.env, req.seed, **params)
        except (InvalidInputError, TypeError) as err:
            raise HTTPException(status_code=422, detail=str(err))
        return GenerateEnvResponse(
            document=env_to_json(cmdp, safe),
            env=req.env,
            seed=req.seed,
            H=cmdp.H,
            num_states=cmdp.num_states,
            num_actions=cmdp.num_actions,
            d=cmdp.d,
            b=cmdp.b,
            slack=safe.slack,
            s1=cmdp.s1,
        )

    @app.post("/experiments", response_model=JobCreated, status_code=202)
    def submit_experiment(req: ExperimentRequest) -> JobCreated:
        try:
            job = jobs.submit(req.model_dump())
        except InvalidInputError as err:
            raise HTTPException(status_code=422, detail=str(err))
        return JobCreated(job_id=job.job_id)

    @app.get("/experiments/{job_id}", response_model=ExperimentStatus)
    def experiment_status(job_id: str) -> ExperimentStatus:
        job = jobs.get(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail="unknown job id")
        results = None
        if job.results:
            results = [
                SeedOutcome(seed=r.seed, ok=r.ok, file=Path(r.path).name, error=r.error)
                for r in job.results
            ]
        return ExperimentStatus(job_id=job_id, status=job.status, detail=job.detail, results=results)

    @app.get("/experiments/{job_id}/files", response_model=FileList)
    def experiment_files(job_id: str) -> FileList:
        if jobs.get(job_id) is None:
            raise HTTPException(status_code=404, detail="unknown job id")
        return FileList(files=jobs.files(job_id))

    @app.get("/experiments/{job_id}/files/{name}", response_model=FileContent)
    def experiment_file(job_id: str, name: str) -> FileContent:
        if jobs.get(job_id) is None:
            raise HTTPException(status_code=404, detail="unknown job id")
        path = jobs.job_dir(job_id) / name
        if "/" in name or ".." in name or not path.is_file():
            raise HTTPException(status_code=404, detail="unknown file")
        return FileContent(name=name, content=path.read_text())

    @app.post("/summarize", response_model=SummarizeResponse)
    def summarize(req: SummarizeRequest) -> SummarizeResponse:
        try:
            logs = [MetricsLog.from_csv(f.content) for f in req.files]
            return SummarizeResponse(content=summarize_logs(logs))
        except InvalidInputError as err:
            raise HTTPException(status_code=422, detail=str(err))

    return app
