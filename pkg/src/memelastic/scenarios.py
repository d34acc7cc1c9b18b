"""Built-in scenario fixtures."""

from __future__ import annotations

from .engine import SimConfig, run_simulation
from .metrics import SimResult
from .models import GB, MapperStepModel, SimPenaltyModel
from .trace import JobSpec, TaskSpec

FIG5_JOB = 3


def fig5_trace() -> list[JobSpec]:
    """One 10 GB node, three long-running 3 GB tasks, then a 3-task job.

    The background jobs leave 1 GB free and finish at 60, 120 and 180 s.
    The job of interest arrives at t=1 with three 3 GB, 10 s tasks that
    run twice as long at any under-sized allocation.
    """
    jobs = []
    for i, dur in enumerate((60.0, 120.0, 180.0)):
        model = SimPenaltyModel(dur, 3 * GB, 1.0)
        jobs.append(JobSpec(i, 0.0, (TaskSpec(3 * GB, dur, model),)))
    task = TaskSpec(3 * GB, 10.0, MapperStepModel(10.0, 3 * GB, 20.0))
    jobs.append(JobSpec(FIG5_JOB, 1.0, (task,) * 3))
    return jobs


def fig5_config(scheduler: str, **overrides) -> SimConfig:
    return SimConfig(node_count=1, cores_per_node=16, mem_per_node=10 * GB, heartbeat_interval=1.0,
                     scheduler=scheduler, **overrides)


def run_fig5(**overrides) -> dict:
    """Run both schedulers; returns the per-scheduler results and the job runtime ratio."""
    trace = fig5_trace()
    results: dict[str, SimResult] = {}
    for name in ("yarn", "yarn-me"):
        results[name] = run_simulation(fig5_config(name, **overrides), trace)
    runtime = {name: next(j.runtime for j in r.jobs if j.job_id == FIG5_JOB) for name, r in results.items()}
    return {"results": results, "job_runtime": runtime, "ratio": runtime["yarn-me"] / runtime["yarn"]}
