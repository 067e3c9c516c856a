"""In-process experiment job manager.

Jobs execute on a small thread pool; each job's seeds fan out through the
harness's own process pool.  State is kept in memory: this service manages
desk-scale experiment batches, not a persistent queue.
"""

from __future__ import annotations

import secrets
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from ..harness import ExperimentConfig, SeedResult, run_experiment


@dataclass
class Job:
    job_id: str
    config: ExperimentConfig
    status: str = "queued"  # queued | running | done | failed
    detail: str | None = None
    results: list[SeedResult] = field(default_factory=list)


class JobManager:
    def __init__(self, workdir: Path, max_parallel_jobs: int = 1):
        self.workdir = Path(workdir)
        self.workdir.mkdir(parents=True, exist_ok=True)
        self._jobs: dict[str, Job] = {}
        self._lock = threading.Lock()
        self._pool = ThreadPoolExecutor(max_workers=max_parallel_jobs)

    def job_dir(self, job_id: str) -> Path:
        return self.workdir / job_id

    def submit(self, request_config: dict) -> Job:
        job_id = secrets.token_hex(8)
        cfg = ExperimentConfig(out_dir=str(self.job_dir(job_id)), **request_config)
        job = Job(job_id=job_id, config=cfg)
        with self._lock:
            self._jobs[job_id] = job
        self._pool.submit(self._run, job)
        return job

    def _run(self, job: Job) -> None:
        job.status = "running"
        try:
            job.results = run_experiment(job.config)
            job.status = "done" if all(r.ok for r in job.results) else "failed"
            if job.status == "failed":
                bad = [r for r in job.results if not r.ok]
                job.detail = f"{len(bad)} seed(s) failed; see .error.json diagnostics"
        except Exception as err:  # defensive: config errors surface per-job
            job.status = "failed"
            job.detail = repr(err)

    def get(self, job_id: str) -> Job | None:
        with self._lock:
            return self._jobs.get(job_id)

    def files(self, job_id: str) -> list[str]:
        out = self.job_dir(job_id)
        if not out.is_dir():
            return []
        return sorted(p.name for p in out.iterdir() if p.is_file())
