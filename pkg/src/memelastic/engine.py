"""Deterministic discrete-event cluster simulator.

Tasks do no work: each placed task is a start/finish event pair whose
duration comes from the ground-truth elasticity model evaluated at the
granted memory. The scheduler sees its own (possibly perturbed) view of
the same trace.

Event order at equal timestamps: task finishes, then job arrivals, then the
heartbeat. A job arrival between ticks triggers a pass over all nodes. A
heartbeat tick runs a pass over the nodes whose state changed since their
last visit: a job arrived on that tick, a task finished there, or the job
holding the node's reservation ran out of pending tasks or changed task
size. A node whose state did not change would get the same answer again,
so it is skipped.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import asdict, dataclass, fields
from typing import Sequence

import numpy as np

from .metrics import JobRecord, SimResult, TaskRecord
from .models import GB, GRANULARITY, floor_memory
from ._fastproj import FastProjection, TaskTable
from .timeline import ClusterSnapshot, JobView, Projection, RunningTask, request_memory, tick_index
from .trace import JobSpec, trace_fingerprint

REGULAR = "regular"
ELASTIC = "elastic"

_FINISH, _ARRIVAL = 0, 1


class SimulationError(RuntimeError):
    pass


class InfeasibleTraceError(SimulationError):
    pass


class AllocationError(SimulationError):
    pass


class InvariantViolation(AssertionError):
    pass


@dataclass
class SimConfig:
    node_count: int = 100
    cores_per_node: int = 16
    mem_per_node: int = 10 * GB
    granularity: int = GRANULARITY
    heartbeat_interval: float = 1.0
    min_memory_fraction: float = 0.10
    # no elastic disk budget unless set
    disk_budget_per_node: float = math.inf
    scheduler: str = "yarn"
    seed: int = 0
    record_node_samples: bool = True
    log_decisions: bool = False
    audit: bool = False

    def __post_init__(self):
        for name in ("node_count", "cores_per_node", "mem_per_node", "granularity", "heartbeat_interval",
                     "disk_budget_per_node"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.mem_per_node % self.granularity:
            raise ValueError("mem_per_node must be a multiple of the granularity")
        if not 0 < self.min_memory_fraction <= 1:
            raise ValueError("min_memory_fraction must lie in (0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        known = {f.name: f for f in fields(cls)}
        unknown = set(d) - set(known)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


class Node:
    __slots__ = ("node_id", "core_capacity", "memory_capacity", "free_cores", "free_memory", "reservation",
                 "elastic_disk_used", "disk_budget", "running", "elastic_running")

    def __init__(self, node_id: int, cores: int, memory: int, disk_budget: float):
        self.node_id = node_id
        self.core_capacity = cores
        self.memory_capacity = memory
        self.free_cores = cores
        self.free_memory = memory
        self.reservation: int | None = None
        self.elastic_disk_used = 0.0
        self.disk_budget = disk_budget
        self.running: dict[int, Allocation] = {}
        self.elastic_running = 0

    def state(self) -> tuple:
        return (self.free_cores, self.free_memory, self.reservation, self.elastic_disk_used,
                tuple(sorted(self.running)))


class Allocation:
    __slots__ = ("alloc_id", "job_id", "task_index", "node_id", "granted_memory", "kind", "start_time",
                 "predicted_finish", "actual_finish", "disk_demand", "cores", "slot")

    def __init__(self, alloc_id, job_id, task_index, node_id, granted_memory, kind, start_time,
                 predicted_finish, actual_finish, disk_demand, cores=1):
        self.alloc_id = alloc_id
        self.job_id = job_id
        self.task_index = task_index
        self.node_id = node_id
        self.granted_memory = granted_memory
        self.kind = kind
        self.start_time = start_time
        self.predicted_finish = predicted_finish
        self.actual_finish = actual_finish
        self.disk_demand = disk_demand
        self.cores = cores
        self.slot = -1


class JobState:
    """Per-job scheduler bookkeeping (allocated memory, pending tasks, reservations)."""

    __slots__ = ("job_id", "submission", "tasks", "truth", "next_task", "running", "finished",
                 "allocated_memory", "reserved_nodes", "arrived", "completion", "suffix_min",
                 "suffix_sum", "pred_finish_sum", "key", "index")

    def __init__(self, view: JobSpec, truth: JobSpec, index: int = 0):
        self.job_id = view.job_id
        self.index = index
        self.submission = view.submission_time
        self.tasks = view.tasks
        self.truth = truth.tasks
        self.next_task = 0
        self.running = 0
        self.finished = 0
        self.allocated_memory = 0
        self.reserved_nodes: set[int] = set()
        self.arrived = False
        self.completion: float | None = None
        n = len(view.tasks)
        self.suffix_min = [0.0] * (n + 1)
        self.suffix_sum = [0.0] * (n + 1)
        self.suffix_min[n] = math.inf
        for i in range(n - 1, -1, -1):
            d = view.tasks[i].ideal_duration
            self.suffix_min[i] = min(d, self.suffix_min[i + 1])
            self.suffix_sum[i] = d + self.suffix_sum[i + 1]
        self.pred_finish_sum = 0.0
        self.key = None

    @property
    def has_pending(self) -> bool:
        return self.next_task < len(self.tasks)

    @property
    def pending_count(self) -> int:
        return len(self.tasks) - self.next_task

    def next_spec(self):
        return self.tasks[self.next_task]


class FairQueue:
    """Arrived jobs with pending tasks, ordered by allocated memory, submission, id."""

    def __init__(self):
        self._heap: list = []
        self._jobs: dict[int, JobState] = {}

    def update(self, job: JobState):
        key = (job.allocated_memory, job.submission, job.job_id) if job.arrived and job.has_pending else None
        if key != job.key:
            job.key = key
            if key is not None:
                self._jobs[job.job_id] = job
                heapq.heappush(self._heap, key)
                if len(self._heap) > 4 * len(self._jobs) + 64:
                    self._compact()
            else:
                self._jobs.pop(job.job_id, None)

    def _compact(self):
        self._heap = [j.key for j in self._jobs.values()]
        heapq.heapify(self._heap)

    def head(self, exclude: int | None = None) -> JobState | None:
        """First job in fair order, optionally skipping job ``exclude``."""
        heap, jobs = self._heap, self._jobs
        while heap:
            key = heap[0]
            j = jobs.get(key[2])
            if j is not None and j.key == key:
                break
            heapq.heappop(heap)
        else:
            return None
        if j.job_id != exclude:
            return j
        top = heapq.heappop(heap)
        try:
            return self.head()
        finally:
            heapq.heappush(heap, top)

    def jobs(self) -> list[JobState]:
        return list(self._jobs.values())

    def ordered(self) -> list[JobState]:
        return sorted(self._jobs.values(), key=lambda j: j.key)

    def __len__(self):
        return len(self._jobs)


class Simulation:
    def __init__(self, config: SimConfig, trace: Sequence[JobSpec], truth: Sequence[JobSpec] | None = None,
                 scheduler=None, reference_projection: bool = False):
        from .schedulers import make_scheduler

        self.config = config
        self.trace = list(trace)
        self.truth = list(truth) if truth is not None else self.trace
        self.scheduler = scheduler if scheduler is not None else make_scheduler(config.scheduler)
        cfg = config
        self.g = cfg.granularity
        self.hb = cfg.heartbeat_interval
        if getattr(self.scheduler, "pools_cluster", False):
            self.nodes = [Node(0, cfg.cores_per_node * cfg.node_count, cfg.mem_per_node * cfg.node_count,
                               cfg.disk_budget_per_node * cfg.node_count)]
        else:
            self.nodes = [Node(i, cfg.cores_per_node, cfg.mem_per_node, cfg.disk_budget_per_node)
                          for i in range(cfg.node_count)]
        self._validate()
        self.jobs: dict[int, JobState] = {}
        for k, (v, t) in enumerate(zip(self.trace, self.truth)):
            self.jobs[v.job_id] = JobState(v, t, k)
        # flat mirrors of scheduler state, read by the compiled projection
        self._reference = reference_projection
        self._table = TaskTable(self.trace, self.g)
        nj, nn = len(self.trace), len(self.nodes)
        self._jalloc = np.zeros(nj, dtype=np.int64)
        self._jnext = self._table.start.copy()
        self._jsub = np.array([v.submission_time for v in self.trace], dtype=float)
        self._active = np.zeros(nj, dtype=np.uint8)
        self._free_mem = np.array([n.free_memory for n in self.nodes], dtype=np.int64)
        self._free_cores = np.array([n.free_cores for n in self.nodes], dtype=np.int64)
        self._resv = np.full(nn, -1, dtype=np.int64)
        slots = sum(n.core_capacity for n in self.nodes)
        self._run_t = np.zeros(slots)
        self._run_node = np.zeros(slots, dtype=np.int64)
        self._run_mem = np.zeros(slots, dtype=np.int64)
        self._run_cores = np.zeros(slots, dtype=np.int64)
        self._run_job = np.zeros(slots, dtype=np.int64)
        self._run_on = np.zeros(slots, dtype=bool)
        self._free_slots = list(range(slots - 1, -1, -1))
        self.queue = FairQueue()
        self.now = 0.0
        self._events: list = []
        self._seq = 0
        for v in self.trace:
            self._push(v.submission_time, _ARRIVAL, v.job_id)
        self.running: dict[int, Allocation] = {}
        self._next_alloc = 0
        self._dirty: set[int] = set()
        self._pass_heap = None
        self._pos = -1
        self._projection: Projection | None = None
        self.unfinished = len(self.jobs)
        self.task_records: list[TaskRecord] = []
        self.decisions: list[dict] = []
        self.elastic_count = 0
        self.used_memory = 0
        self._sample_t: list[float] = []
        self._sample_mem: list[int] = []
        self._sample_el: list[int] = []
        self._node_rows: list[np.ndarray] = []

    # -- setup ------------------------------------------------------------------
    def _validate(self):
        if len(self.truth) != len(self.trace):
            raise SimulationError("ground truth and scheduler view differ in job count")
        seen = set()
        cap_mem = max(n.memory_capacity for n in self.nodes)
        elastic = getattr(self.scheduler, "elastic", False)
        for v, t in zip(self.trace, self.truth):
            if v.job_id != t.job_id or len(v.tasks) != len(t.tasks):
                raise SimulationError(f"job {v.job_id}: ground truth does not match the scheduler view")
            if v.job_id in seen:
                raise SimulationError(f"duplicate job id {v.job_id}")
            seen.add(v.job_id)
            for task in v.tasks:
                need = floor_memory(task.model, self.g, self.config.min_memory_fraction) if elastic \
                    else request_memory(task, self.g)
                if need > cap_mem:
                    raise InfeasibleTraceError(
                        f"job {v.job_id}: a task needs {need} bytes, nodes have {cap_mem}")

    def _push(self, t, prio, payload):
        heapq.heappush(self._events, (t, prio, self._seq, payload))
        self._seq += 1

    # -- state mutation ---------------------------------------------------------
    def mark_dirty(self, node_id: int):
        if self._pass_heap is not None and node_id > self._pos:
            heapq.heappush(self._pass_heap, node_id)
        else:
            self._dirty.add(node_id)

    def reserve(self, node: Node, job: JobState):
        if node.reservation is not None and node.reservation != job.job_id:
            self.unreserve(node)
        node.reservation = job.job_id
        job.reserved_nodes.add(node.node_id)
        self._resv[node.node_id] = job.index

    def unreserve(self, node: Node):
        if node.reservation is not None:
            self.jobs[node.reservation].reserved_nodes.discard(node.node_id)
            node.reservation = None
            self._resv[node.node_id] = -1

    def truth_runtime(self, job: JobState, index: int, memory: int) -> float:
        model = job.truth[index].model
        floor = getattr(model, "min_memory", None)
        if floor is not None and memory < floor:
            memory = floor
        return model.runtime(memory)

    def allocate(self, node: Node, job: JobState, memory: int, kind: str, unreserve: bool = True,
                 estimate: float | None = None) -> Allocation:
        idx = job.next_task
        task = job.tasks[idx]
        if not job.arrived or idx >= len(job.tasks):
            raise AllocationError(f"job {job.job_id} has no pending task")
        if memory % self.g or memory <= 0:
            raise AllocationError(f"grant {memory} is not a positive multiple of {self.g}")
        if node.free_cores < task.cores or node.free_memory < memory:
            raise AllocationError(f"node {node.node_id} cannot host {memory} bytes")
        ideal = request_memory(task, self.g)
        if kind == REGULAR:
            if memory < ideal:
                raise AllocationError("regular grant below ideal memory")
        else:
            if memory >= ideal:
                raise AllocationError("elastic grant at or above ideal memory")
            if memory < floor_memory(task.model, self.g, self.config.min_memory_fraction):
                raise AllocationError("elastic grant below the memory floor")
            if node.elastic_disk_used + task.disk_rate_demand > node.disk_budget * (1 + 1e-12):
                raise AllocationError("elastic grant exceeds the node disk budget")
        t = self.now
        predicted = t + task.model.runtime(memory)
        actual = t + self.truth_runtime(job, idx, memory)
        a = Allocation(self._next_alloc, job.job_id, idx, node.node_id, memory, kind, t, predicted, actual,
                       task.disk_rate_demand if kind == ELASTIC else 0.0, task.cores)
        self._next_alloc += 1
        node.free_cores -= task.cores
        node.free_memory -= memory
        node.running[a.alloc_id] = a
        if kind == ELASTIC:
            node.elastic_disk_used += a.disk_demand
            node.elastic_running += 1
            self.elastic_count += 1
        self.used_memory += memory
        self.running[a.alloc_id] = a
        a.slot = slot = self._free_slots.pop()
        self._run_t[slot] = predicted
        self._run_node[slot] = node.node_id
        self._run_mem[slot] = memory
        self._run_cores[slot] = task.cores
        self._run_job[slot] = job.index
        self._run_on[slot] = True
        nid = node.node_id
        self._free_mem[nid] = node.free_memory
        self._free_cores[nid] = node.free_cores
        self._jalloc[job.index] += memory
        self._jnext[job.index] += 1
        job.next_task += 1
        job.running += 1
        job.allocated_memory += memory
        job.pred_finish_sum += predicted
        if unreserve and node.reservation == job.job_id:
            self.unreserve(node)
        if job.reserved_nodes and (not job.has_pending or
                                   request_memory(job.tasks[job.next_task], self.g) != ideal):
            for n in sorted(job.reserved_nodes):
                self.mark_dirty(n)
        self.queue.update(job)
        self._push(actual, _FINISH, a)
        if self.config.log_decisions and kind == ELASTIC:
            self.decisions.append({"time": t, "job_id": job.job_id, "task_index": idx, "node_id": node.node_id,
                                   "memory": memory, "kind": kind, "predicted_finish": predicted,
                                   "job_estimate": estimate})
        if self.config.audit:
            self.audit()
        return a

    def release(self, a: Allocation):
        node = self.nodes[a.node_id]
        job = self.jobs[a.job_id]
        del node.running[a.alloc_id]
        del self.running[a.alloc_id]
        node.free_cores += a.cores
        node.free_memory += a.granted_memory
        self._free_mem[a.node_id] = node.free_memory
        self._free_cores[a.node_id] = node.free_cores
        self._jalloc[job.index] -= a.granted_memory
        self._run_on[a.slot] = False
        self._free_slots.append(a.slot)
        if a.kind == ELASTIC:
            node.elastic_disk_used -= a.disk_demand
            if not node.elastic_running - 1:
                node.elastic_disk_used = 0.0
            node.elastic_running -= 1
            self.elastic_count -= 1
        self.used_memory -= a.granted_memory
        job.running -= 1
        job.allocated_memory -= a.granted_memory
        job.pred_finish_sum -= a.predicted_finish
        self.queue.update(job)

    # -- events -----------------------------------------------------------------
    def _finish(self, a: Allocation, t: float):
        self.release(a)
        job = self.jobs[a.job_id]
        job.finished += 1
        rt = a.actual_finish - a.start_time
        self.task_records.append(TaskRecord(
            job.job_id, a.task_index, a.node_id, a.kind, a.granted_memory, job.submission, a.start_time,
            a.actual_finish, a.start_time - job.submission, rt, a.predicted_finish - a.start_time))
        if job.finished == len(job.tasks):
            job.completion = t
            self.unfinished -= 1
        self.mark_dirty(a.node_id)

    def _arrive(self, job_id: int):
        job = self.jobs[job_id]
        job.arrived = True
        self._active[job.index] = 1
        self.queue.update(job)
        for n in range(len(self.nodes)):
            self._dirty.add(n)

    # -- scheduling -------------------------------------------------------------
    def projection(self):
        """Timeline projection of the current state, built at most once per pass."""
        if self._projection is None:
            if self._reference:
                self._projection = Projection(self.snapshot())
            else:
                on = self._run_on
                self._projection = FastProjection(
                    self._table, self.now, self.hb, self._free_mem, self._free_cores, self._resv, self._jalloc,
                    self._jnext, self._jsub, self._active, self._run_t[on], self._run_node[on],
                    self._run_mem[on], self._run_cores[on], self._run_job[on])
        return self._projection

    def estimate_at_least(self, job: JobState, bound: float) -> float:
        """Projected completion of ``job``, or a lower bound on it that is at least ``bound``."""
        key = job.job_id if self._reference else job.index
        return self.projection().estimate_at_least(key, bound)

    def reserved_start_blocked(self, node: Node, owner: JobState, memory: int, finish: float, cores: int) -> bool:
        """Would a foreign task on ``node`` until ``finish`` delay the reserving job's next start there?"""
        key = owner.job_id if self._reference else owner.index
        return self.projection().reserved_start_blocked(node.node_id, key, memory, finish, cores)

    def snapshot(self) -> ClusterSnapshot:
        running = []
        for a in self.running.values():
            running.append(RunningTask(a.predicted_finish, a.alloc_id, a.node_id, a.granted_memory, a.cores,
                                       a.job_id, a.start_time))
        jobs = tuple(
            JobView(j.job_id, j.submission, j.allocated_memory, j.tasks, j.next_task, j.suffix_min)
            for j in self.jobs.values() if j.arrived and j.completion is None
        )
        nodes = self.nodes
        return ClusterSnapshot(
            self.now, self.hb, tuple(n.free_memory for n in nodes), tuple(n.free_cores for n in nodes),
            tuple(n.reservation for n in nodes), tuple(running), jobs, self.g)

    def _pass(self):
        self._projection = None
        heap = sorted(self._dirty)
        self._dirty = set()
        self._pass_heap = heap
        self._pos = -1
        visited = set()
        decide = self.scheduler.decide
        while heap:
            nid = heapq.heappop(heap)
            if nid in visited:
                continue
            visited.add(nid)
            self._pos = nid
            node = self.nodes[nid]
            while True:
                d = decide(self, node)
                if d is None:
                    break
                if d.action == "allocate":
                    self.allocate(node, self.jobs[d.job_id], d.memory, d.kind, d.unreserve, d.estimate)
                    continue
                if d.action == "reserve":
                    self.reserve(node, self.jobs[d.job_id])
                break
        self._pass_heap = None
        self._projection = None

    # -- sampling ---------------------------------------------------------------
    def _sample(self, t: float, repeat: int = 1):
        for _ in range(repeat):
            self._sample_t.append(t)
            self._sample_mem.append(self.used_memory)
            self._sample_el.append(self.elastic_count)
            t += self.hb
        if self.config.record_node_samples:
            row = np.fromiter((n.memory_capacity - n.free_memory for n in self.nodes), dtype=np.int64,
                              count=len(self.nodes))
            self._node_rows.extend([row] * repeat)

    def audit(self):
        g = self.g
        for n in self.nodes:
            used_mem = sum(a.granted_memory for a in n.running.values())
            used_cores = sum(a.cores for a in n.running.values())
            disk = sum(a.disk_demand for a in n.running.values())
            if not 0 <= n.free_cores <= n.core_capacity or used_cores != n.core_capacity - n.free_cores:
                raise InvariantViolation(f"node {n.node_id}: core accounting broken")
            if not 0 <= n.free_memory <= n.memory_capacity or used_mem != n.memory_capacity - n.free_memory:
                raise InvariantViolation(f"node {n.node_id}: memory accounting broken")
            if n.free_memory % g:
                raise InvariantViolation(f"node {n.node_id}: free memory off the grid")
            if disk > n.disk_budget * (1 + 1e-9) + 1e-9:
                raise InvariantViolation(f"node {n.node_id}: elastic disk budget exceeded")
            for a in n.running.values():
                if a.granted_memory % g:
                    raise InvariantViolation("grant off the grid")
                if a.start_time < self.jobs[a.job_id].submission:
                    raise InvariantViolation("task started before its job arrived")

    # -- main loop --------------------------------------------------------------
    def run(self) -> SimResult:
        hb = self.hb
        events = self._events
        k = 0
        while self.unfinished:
            tick = k * hb
            if events and events[0][0] <= tick:
                t = events[0][0]
                self.now = t
                arrived = False
                while events and events[0][0] == t:
                    _, prio, _, payload = heapq.heappop(events)
                    if prio == _FINISH:
                        self._finish(payload, t)
                    else:
                        self._arrive(payload)
                        arrived = True
                if self.config.audit:
                    self.audit()
                # arrivals on a tick wait for that tick's pass, so no instant gets two passes
                if arrived and t < tick:
                    self._pass()
                continue
            self.now = tick
            if self._dirty:
                self._pass()
            self._sample(tick)
            if self._dirty:
                k += 1
                continue
            if not events:
                if self.unfinished:
                    raise SimulationError("simulation stalled with unfinished jobs")
                break
            k2 = max(k + 1, tick_index(events[0][0], hb))
            if k2 > k + 1:
                self._sample((k + 1) * hb, repeat=k2 - k - 1)
            k = k2
        return self._result()

    def _result(self) -> SimResult:
        jobs = [JobRecord(j.job_id, j.submission, j.completion, len(j.tasks))
                for j in sorted(self.jobs.values(), key=lambda j: j.job_id)]
        tasks = sorted(self.task_records, key=lambda r: (r.job_id, r.task_index))
        cap = sum(n.memory_capacity for n in self.nodes)
        node_samples = None
        if self.config.record_node_samples:
            node_samples = np.array(self._node_rows, dtype=np.int64).reshape(len(self._node_rows), len(self.nodes))
        return SimResult(
            scheduler=self.scheduler.name,
            config=self.config.to_dict(),
            trace_fingerprint=trace_fingerprint(self.trace),
            jobs=jobs,
            tasks=tasks,
            memory_capacity=cap,
            sample_times=np.array(self._sample_t, dtype=float),
            sample_memory_fraction=np.array(self._sample_mem, dtype=float) / cap,
            sample_elastic_tasks=np.array(self._sample_el, dtype=np.int64),
            node_samples=node_samples,
            decisions=self.decisions,
        )


def run_simulation(config: SimConfig, trace: Sequence[JobSpec], truth: Sequence[JobSpec] | None = None,
                   scheduler=None) -> SimResult:
    """Simulate ``trace`` to completion under ``config.scheduler``.

    ``truth`` (same shape as ``trace``) is what tasks actually do; by default
    the scheduler's view is exact.
    """
    return Simulation(config, trace, truth, scheduler).run()
