"""Job traces: schema, JSON-lines file format and synthetic generation.

File format
-----------
One JSON object per line, one job per line::

    {"job_id": 0, "submission_time": 12.5, "tasks": [
        {"count": 40, "ideal_memory": 2000000000, "ideal_duration": 120.0,
         "cores": 1, "disk_rate_demand": 11666666.67,
         "model": {"kind": "sim_penalty", "max_penalty": 3.0,
                   "min_memory_fraction": 0.1}}]}

``tasks`` is run-length encoded: ``count`` consecutive identical tasks share
one entry (``count`` defaults to 1). Memory is in bytes, times in seconds.
Model kinds are ``sim_penalty``, ``reducer_spill`` (``input_size``,
``disk_rate``, ``shuffle_fraction``, ``expansion_factor``,
``local_input_fraction``) and ``mapper_step`` (``undersized_runtime``); the
ideal memory and runtime of a model are taken from its task. Blank lines and
lines starting with ``#`` are ignored.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .models import (
    DEFAULT_MIN_MEMORY_FRACTION,
    DEFAULT_SHUFFLE_FRACTION,
    GB,
    GRANULARITY,
    ElasticityModel,
    MapperStepModel,
    ModelError,
    ReducerSpillModel,
    SimPenaltyModel,
)


class TraceError(ValueError):
    pass


class TraceParseError(TraceError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class InvalidSpecError(TraceError):
    pass


def default_disk_rate_demand(ideal_memory: int, ideal_duration: float) -> float:
    """Upper bound on spill bandwidth: the whole shuffle buffer over the task lifetime."""
    return ideal_memory * DEFAULT_SHUFFLE_FRACTION / ideal_duration


@dataclass(frozen=True)
class TaskSpec:
    ideal_memory: int
    ideal_duration: float
    model: ElasticityModel
    disk_rate_demand: float = -1.0
    cores: int = 1

    def __post_init__(self):
        if self.ideal_memory < GRANULARITY:
            raise TraceError(f"ideal_memory {self.ideal_memory} below the {GRANULARITY}-byte grid unit")
        if not self.ideal_duration > 0:
            raise TraceError("ideal_duration must be positive")
        if self.cores != 1:
            raise TraceError("tasks use exactly one core")
        if self.model.ideal_memory != self.ideal_memory or self.model.ideal_runtime != self.ideal_duration:
            raise TraceError("model ideal point does not match the task")
        if self.disk_rate_demand < 0:
            object.__setattr__(
                self, "disk_rate_demand", default_disk_rate_demand(self.ideal_memory, self.ideal_duration)
            )

    @classmethod
    def sim_penalty(
        cls,
        ideal_memory: int,
        ideal_duration: float,
        max_penalty: float = 3.0,
        min_memory_fraction: float = DEFAULT_MIN_MEMORY_FRACTION,
        disk_rate_demand: float = -1.0,
    ) -> "TaskSpec":
        model = SimPenaltyModel(ideal_duration, ideal_memory, max_penalty, min_memory_fraction)
        return cls(ideal_memory, ideal_duration, model, disk_rate_demand)

    def with_model(self, **changes) -> "TaskSpec":
        """Copy with ideal point or model parameters changed consistently."""
        mem = changes.pop("ideal_memory", self.ideal_memory)
        dur = changes.pop("ideal_duration", self.ideal_duration)
        model = replace(self.model, ideal_memory=mem, ideal_runtime=dur, **changes)
        return TaskSpec(mem, dur, model, self.disk_rate_demand, self.cores)


@dataclass(frozen=True)
class JobSpec:
    job_id: int
    submission_time: float
    tasks: tuple[TaskSpec, ...]

    def __post_init__(self):
        if not self.submission_time >= 0:
            raise TraceError(f"job {self.job_id}: negative submission_time")
        if not self.tasks:
            raise TraceError(f"job {self.job_id}: a job needs at least one task")
        if not isinstance(self.tasks, tuple):
            object.__setattr__(self, "tasks", tuple(self.tasks))


@dataclass(frozen=True)
class TraceGenSpec:
    job_count: int = 100
    distribution: str = "uniform"
    tasks_per_job_range: tuple[int, int] = (1, 300)
    mem_per_task_range: tuple[float, float] = (1.0, 6.0)  # GB
    duration_range: tuple[float, float] = (1.0, 350.0)  # s
    arrival_window: float = 1000.0
    max_penalty: float = 3.0
    min_memory_fraction: float = DEFAULT_MIN_MEMORY_FRACTION
    seed: int = 0

    def __post_init__(self):
        if self.distribution not in ("uniform", "exponential"):
            raise InvalidSpecError(f"unknown distribution {self.distribution!r}")
        if self.job_count < 0:
            raise InvalidSpecError("job_count must be >= 0")
        if self.arrival_window < 0:
            raise InvalidSpecError("arrival_window must be >= 0")
        for name in ("tasks_per_job_range", "mem_per_task_range", "duration_range"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise InvalidSpecError(f"{name}: empty range ({lo}, {hi})")
        if self.tasks_per_job_range[0] < 1:
            raise InvalidSpecError("jobs need at least one task")
        lo, hi = self.mem_per_task_range
        if math.ceil(lo * GB / GRANULARITY) > math.floor(hi * GB / GRANULARITY) or hi * GB < GRANULARITY:
            raise InvalidSpecError("mem_per_task_range holds no 100 MB grid point")
        if not self.duration_range[0] > 0:
            raise InvalidSpecError("durations must be positive")


def _draw(rng: np.random.Generator, dist: str, lo: float, hi: float) -> float:
    if lo == hi:
        return lo
    if dist == "uniform":
        return rng.uniform(lo, hi)
    scale = (hi - lo) / 3.0
    while True:
        x = lo + rng.exponential(scale)
        if x <= hi:
            return x


def generate_trace(spec: TraceGenSpec) -> list[JobSpec]:
    """Synthetic trace; a pure function of ``spec`` (seed included).

    Submission times are uniform over the arrival window. Task count, task
    memory and duration are drawn per job from ``spec.distribution``; all
    tasks of a job are identical. Memory lands on the 100 MB grid and task
    counts and durations on whole numbers, all clamped into their ranges.
    """
    rng = np.random.default_rng(spec.seed)
    t_lo, t_hi = spec.tasks_per_job_range
    m_lo = math.ceil(spec.mem_per_task_range[0] * GB / GRANULARITY)
    m_hi = math.floor(spec.mem_per_task_range[1] * GB / GRANULARITY)
    d_lo, d_hi = spec.duration_range
    rows = []
    for _ in range(spec.job_count):
        submission = float(rng.uniform(0.0, spec.arrival_window))
        ntasks = int(min(t_hi, max(t_lo, round(_draw(rng, spec.distribution, t_lo, t_hi)))))
        mem_units = int(min(m_hi, max(m_lo, round(_draw(rng, spec.distribution, m_lo, m_hi)))))
        duration = float(min(math.floor(d_hi), max(math.ceil(d_lo), round(_draw(rng, spec.distribution, d_lo, d_hi)))))
        rows.append((submission, ntasks, mem_units * GRANULARITY, duration))
    rows.sort(key=lambda r: r[0])
    jobs = []
    for job_id, (submission, ntasks, mem, duration) in enumerate(rows):
        task = TaskSpec.sim_penalty(mem, duration, spec.max_penalty, spec.min_memory_fraction)
        jobs.append(JobSpec(job_id, submission, (task,) * ntasks))
    return jobs


def _model_to_dict(model: ElasticityModel) -> dict:
    if isinstance(model, SimPenaltyModel):
        return {"kind": "sim_penalty", "max_penalty": model.max_penalty,
                "min_memory_fraction": model.min_memory_fraction}
    if isinstance(model, ReducerSpillModel):
        return {"kind": "reducer_spill", "input_size": model.input_size, "disk_rate": model.disk_rate,
                "shuffle_fraction": model.shuffle_fraction, "expansion_factor": model.expansion_factor,
                "local_input_fraction": model.local_input_fraction}
    if isinstance(model, MapperStepModel):
        return {"kind": "mapper_step", "undersized_runtime": model.undersized_runtime}
    raise TypeError(f"unsupported model {type(model).__name__}")


def _model_from_dict(d: dict, ideal_memory: int, ideal_runtime: float) -> ElasticityModel:
    d = dict(d)
    kind = d.pop("kind")
    if kind == "sim_penalty":
        return SimPenaltyModel(ideal_runtime, ideal_memory, **d)
    if kind == "reducer_spill":
        return ReducerSpillModel(ideal_runtime=ideal_runtime, ideal_memory=ideal_memory, **d)
    if kind == "mapper_step":
        return MapperStepModel(ideal_runtime, ideal_memory, **d)
    raise ValueError(f"unknown model kind {kind!r}")


def _task_to_dict(task: TaskSpec, count: int) -> dict:
    d = {"ideal_memory": task.ideal_memory, "ideal_duration": task.ideal_duration, "cores": task.cores,
         "disk_rate_demand": task.disk_rate_demand, "model": _model_to_dict(task.model)}
    if count != 1:
        d = {"count": count, **d}
    return d


def job_to_record(job: JobSpec) -> dict:
    groups: list[list] = []
    for task in job.tasks:
        if groups and groups[-1][0] == task:
            groups[-1][1] += 1
        else:
            groups.append([task, 1])
    return {"job_id": job.job_id, "submission_time": job.submission_time,
            "tasks": [_task_to_dict(t, n) for t, n in groups]}


def job_from_record(rec: dict) -> JobSpec:
    tasks = []
    for td in rec["tasks"]:
        td = dict(td)
        count = int(td.pop("count", 1))
        if count < 1:
            raise ValueError("task count must be >= 1")
        mem = int(td["ideal_memory"])
        dur = float(td["ideal_duration"])
        model = _model_from_dict(td["model"], mem, dur)
        task = TaskSpec(mem, dur, model, float(td.get("disk_rate_demand", -1.0)), int(td.get("cores", 1)))
        tasks.extend([task] * count)
    return JobSpec(int(rec["job_id"]), float(rec["submission_time"]), tuple(tasks))


def dumps_trace(jobs: Iterable[JobSpec]) -> str:
    return "".join(json.dumps(job_to_record(j), separators=(",", ":")) + "\n" for j in jobs)


def loads_trace(text: str) -> list[JobSpec]:
    jobs = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            jobs.append(job_from_record(json.loads(line)))
        except (KeyError, TypeError, ValueError, ModelError) as exc:
            if isinstance(exc, KeyError):
                exc = f"missing field {exc}"
            raise TraceParseError(lineno, str(exc)) from None
    return jobs


def write_trace(jobs: Sequence[JobSpec], path) -> None:
    Path(path).write_text(dumps_trace(jobs))


def read_trace(path) -> list[JobSpec]:
    return loads_trace(Path(path).read_text())


def trace_fingerprint(jobs: Sequence[JobSpec]) -> str:
    return hashlib.sha256(dumps_trace(jobs).encode()).hexdigest()[:16]


def scale_trace(jobs: Sequence[JobSpec], factor: int) -> list[JobSpec]:
    """``factor`` copies of a trace with fresh job ids, for weak-scaling runs."""
    out = []
    for k in range(factor):
        for j in jobs:
            out.append(replace(j, job_id=k * len(jobs) + j.job_id))
    out.sort(key=lambda j: (j.submission_time, j.job_id))
    return out


def total_tasks(jobs: Sequence[JobSpec]) -> int:
    return sum(len(j.tasks) for j in jobs)
