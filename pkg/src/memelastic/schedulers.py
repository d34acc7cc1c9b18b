"""Scheduling policies.

A policy is asked, node by node, what to do next on that node; the engine
applies the answer and asks again until the policy returns ``None`` or a
reservation. Policies only read engine state and return decisions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from .models import floor_memory, min_memory_for_best_runtime
from .timeline import request_memory

REGULAR = "regular"
ELASTIC = "elastic"


@dataclass(frozen=True)
class Decision:
    action: str  # allocate | reserve
    job_id: int
    memory: int = 0
    kind: str = REGULAR
    # drop the node's reservation if it belongs to this job
    unreserve: bool = True
    # job completion estimate backing an elastic grant
    estimate: float | None = None


def allocate(job_id: int, memory: int, kind: str = REGULAR, unreserve: bool = True,
             estimate: float | None = None) -> Decision:
    return Decision("allocate", job_id, memory, kind, unreserve, estimate)


def reserve(job_id: int) -> Decision:
    return Decision("reserve", job_id)


def fair_key(job) -> tuple:
    return (job.allocated_memory, job.submission, job.job_id)


def fair_order(jobs: Iterable) -> list:
    """Jobs by allocated memory, then submission time, then id."""
    return sorted(jobs, key=fair_key)


def _regular_fit(sim, node, job) -> Decision | None:
    task = job.tasks[job.next_task]
    mem = request_memory(task, sim.g)
    if node.free_cores >= task.cores and node.free_memory >= mem:
        return allocate(job.job_id, mem)
    return None


def _live_reservation(sim, node):
    r = node.reservation
    if r is None:
        return None
    job = sim.jobs[r]
    if not job.has_pending:
        sim.unreserve(node)
        return None
    return job


class YarnScheduler:
    """Fair-share YARN: regular grants only, a job that does not fit reserves the node."""

    name = "yarn"
    elastic = False
    pools_cluster = False

    def decide(self, sim, node) -> Decision | None:
        job = _live_reservation(sim, node)
        reserved = job is not None
        if job is None:
            job = sim.queue.head()
            if job is None:
                return None
        d = _regular_fit(sim, node, job)
        if d is not None:
            return d
        if not reserved:
            return reserve(job.job_id)
        return None


class YarnMeScheduler:
    """YARN with memory elasticity.

    A task that does not fit at ideal memory may still start under-sized,
    at the smallest grid allocation with the best predicted runtime, when
    that does not push its job's completion past the current estimate and
    the node's elastic disk budget allows it. Otherwise the job reserves
    the node. On a node reserved for a job that cannot start, the next job
    in fair order may use the node if the projection shows this does not
    delay the reserved job's next start there.
    """

    name = "yarn-me"
    elastic = True
    pools_cluster = False

    def _place(self, sim, node, job, unreserve: bool = True) -> Decision | None:
        task = job.tasks[job.next_task]
        ideal = request_memory(task, sim.g)
        if node.free_cores < task.cores:
            return None
        if node.free_memory >= ideal:
            return allocate(job.job_id, ideal, REGULAR, unreserve)
        frac = sim.config.min_memory_fraction
        floor = floor_memory(task.model, sim.g, frac)
        avail = min(node.free_memory, ideal - sim.g)
        if avail < floor:
            return None
        if node.elastic_disk_used + task.disk_rate_demand > node.disk_budget:
            return None
        mem, runtime = min_memory_for_best_runtime(task.model, avail, sim.g, frac)
        finish = sim.now + runtime
        est = sim.estimate_at_least(job, finish)
        if finish <= est:
            return allocate(job.job_id, mem, ELASTIC, unreserve, est)
        return None

    def decide(self, sim, node) -> Decision | None:
        owner = _live_reservation(sim, node)
        job = owner if owner is not None else sim.queue.head()
        if job is None:
            return None
        d = self._place(sim, node, job)
        if d is not None:
            return d
        if owner is None:
            return reserve(job.job_id)
        other = sim.queue.head(exclude=owner.job_id)
        if other is None:
            return None
        d = self._place(sim, node, other, unreserve=False)
        if d is None:
            return None
        task = other.tasks[other.next_task]
        finish = sim.now + task.model.runtime(d.memory)
        if sim.reserved_start_blocked(node, owner, d.memory, finish, task.cores):
            return None
        return d


class MeganodeScheduler:
    """Idealised bound: one pooled node, shortest remaining job first, no elasticity."""

    name = "meganode"
    elastic = False
    pools_cluster = True

    @staticmethod
    def remaining_work(sim, job) -> float:
        """Pending ideal durations plus the predicted residual of running tasks."""
        return job.suffix_sum[job.next_task] + job.pred_finish_sum - sim.now * job.running

    def decide(self, sim, node) -> Decision | None:
        jobs = sim.queue.jobs()
        jobs.sort(key=lambda j: (self.remaining_work(sim, j), j.submission, j.job_id))
        for job in jobs:
            d = _regular_fit(sim, node, job)
            if d is not None:
                return d
        return None


SCHEDULERS = {"yarn": YarnScheduler, "yarn-me": YarnMeScheduler, "meganode": MeganodeScheduler}


def make_scheduler(name: str):
    try:
        return SCHEDULERS[name]()
    except KeyError:
        raise ValueError(f"unknown scheduler {name!r}; choose from {sorted(SCHEDULERS)}") from None
