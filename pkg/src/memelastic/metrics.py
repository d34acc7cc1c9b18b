"""Simulation results, metrics and CSV/JSON emission."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class TaskRecord:
    job_id: int
    task_index: int
    node_id: int
    kind: str
    granted_memory: int
    submission_time: float
    start_time: float
    finish_time: float
    queue_time: float
    runtime: float
    predicted_runtime: float

    @property
    def completion_time(self) -> float:
        return self.queue_time + self.runtime


@dataclass(frozen=True)
class JobRecord:
    job_id: int
    submission_time: float
    completion_time: float
    task_count: int

    @property
    def runtime(self) -> float:
        return self.completion_time - self.submission_time


@dataclass
class SimResult:
    scheduler: str
    config: dict
    trace_fingerprint: str
    jobs: list[JobRecord]
    tasks: list[TaskRecord]
    memory_capacity: int  # bytes, whole cluster
    sample_times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    sample_memory_fraction: np.ndarray = field(default_factory=lambda: np.zeros(0))
    sample_elastic_tasks: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    node_samples: np.ndarray | None = None  # ticks x nodes, bytes in use
    decisions: list[dict] = field(default_factory=list)

    @property
    def makespan(self) -> float:
        return makespan(self)


def _require(result: SimResult):
    if not result.jobs:
        raise MetricsError("empty result")


def avg_job_runtime(result: SimResult) -> float:
    _require(result)
    return float(np.mean([j.runtime for j in result.jobs]))


def makespan(result: SimResult) -> float:
    _require(result)
    return max(j.completion_time for j in result.jobs) - min(j.submission_time for j in result.jobs)


def avg_memory_utilization(result: SimResult) -> float:
    """Time-weighted fraction of cluster memory granted, over the makespan."""
    span = makespan(result)
    if span <= 0:
        return 0.0
    used = sum(t.granted_memory * t.runtime for t in result.tasks)
    return used / (result.memory_capacity * span)


def elastic_task_timeline(result: SimResult) -> tuple[np.ndarray, np.ndarray]:
    """(tick times, number of elastic tasks running at each tick)."""
    _require(result)
    return result.sample_times, result.sample_elastic_tasks


def elastic_fraction(result: SimResult) -> float:
    _require(result)
    return sum(t.kind == "elastic" for t in result.tasks) / len(result.tasks)


_COMPARABLE = ("node_count", "cores_per_node", "mem_per_node", "granularity", "heartbeat_interval",
               "min_memory_fraction", "disk_budget_per_node")


def compare(result_a: SimResult, result_b: SimResult) -> dict:
    """Ratios of ``result_a`` to ``result_b``; both must come from one trace and cluster."""
    if result_a.trace_fingerprint != result_b.trace_fingerprint:
        raise MetricsError("results come from different traces")
    for key in _COMPARABLE:
        if result_a.config.get(key) != result_b.config.get(key):
            raise MetricsError(f"cluster config mismatch on {key!r}")
    return {
        "a": result_a.scheduler,
        "b": result_b.scheduler,
        "avg_job_runtime_ratio": avg_job_runtime(result_a) / avg_job_runtime(result_b),
        "makespan_ratio": makespan(result_a) / makespan(result_b),
    }


def summary(result: SimResult) -> dict:
    return {
        "scheduler": result.scheduler,
        "jobs": len(result.jobs),
        "tasks": len(result.tasks),
        "avg_job_runtime": avg_job_runtime(result),
        "makespan": makespan(result),
        "avg_memory_utilization": avg_memory_utilization(result),
        "elastic_tasks": sum(t.kind == "elastic" for t in result.tasks),
    }


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_result(result: SimResult, out_dir) -> None:
    """jobs.csv, tasks.csv, utilization.csv, node_utilization.csv (if sampled), summary.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "jobs.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["job_id", "submission_time", "completion_time", "runtime", "task_count"])
        for j in result.jobs:
            w.writerow([j.job_id, _fmt(j.submission_time), _fmt(j.completion_time), _fmt(j.runtime), j.task_count])
    with open(out / "tasks.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        names = list(TaskRecord.__dataclass_fields__)
        w.writerow(names)
        for t in result.tasks:
            w.writerow([_fmt(getattr(t, n)) for n in names])
    with open(out / "utilization.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "memory_fraction", "elastic_tasks"])
        for t, f, e in zip(result.sample_times, result.sample_memory_fraction, result.sample_elastic_tasks):
            w.writerow([_fmt(float(t)), _fmt(float(f)), int(e)])
    if result.node_samples is not None:
        with open(out / "node_utilization.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time", "node_id", "memory_in_use"])
            for t, row in zip(result.sample_times, result.node_samples):
                for n, used in enumerate(row):
                    w.writerow([_fmt(float(t)), n, int(used)])
    if result.decisions:
        with open(out / "decisions.jsonl", "w") as fh:
            for d in result.decisions:
                fh.write(json.dumps(d, sort_keys=True) + "\n")
    (out / "summary.json").write_text(json.dumps(summary(result), indent=2, sort_keys=True) + "\n")


def read_tasks_csv(path) -> list[TaskRecord]:
    types = {n: f.type for n, f in TaskRecord.__dataclass_fields__.items()}
    conv = {"int": int, "float": float, "str": str}
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(TaskRecord(**{k: conv[types[k]](v) for k, v in row.items()}))
    return out


def jobs_from_tasks(tasks: Sequence[TaskRecord]) -> list[JobRecord]:
    """Rebuild per-job records from task rows alone."""
    by_job: dict[int, list[TaskRecord]] = {}
    for t in tasks:
        by_job.setdefault(t.job_id, []).append(t)
    return [
        JobRecord(jid, ts[0].submission_time, max(t.finish_time for t in ts), len(ts))
        for jid, ts in sorted(by_job.items())
    ]


def cdf(values: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    """Sorted values and their empirical cumulative probabilities."""
    xs = np.sort(np.asarray(values, dtype=float))
    if xs.size == 0:
        raise MetricsError("empty sample")
    return xs, np.arange(1, xs.size + 1) / xs.size


def write_cdf(values: Sequence[float], path) -> None:
    xs, ps = cdf(values)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["ratio", "cdf"])
        for x, p in zip(xs, ps):
            w.writerow([_fmt(float(x)), _fmt(float(p))])
