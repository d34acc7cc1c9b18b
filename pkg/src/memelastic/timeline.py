"""Timeline generator: predicted job completion times from queued work.

Starting from a snapshot of the cluster, the generator plays the plain YARN
policy forward in time. Running tasks release their resources at their
predicted finish, pending tasks are placed at ideal memory and ideal
duration in fair-share order, and node reservations are honoured. Placements
happen on heartbeat ticks only, and only on nodes whose state changed, which
is what the engine does. No jobs arrive during a projection and no task is
assumed to run elastically.

``generate`` runs the projection to the end. The scheduler instead asks
bounded questions through :class:`Projection` ("is job J's estimate at least
E?"); the projection is advanced only as far as needed to answer. Because
the projection is causal, a truncated run agrees with the full one on every
placement it made.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

from .models import GRANULARITY, round_up


def tick_index(t: float, interval: float) -> int:
    """Index of the first heartbeat tick at or after ``t``."""
    k = math.ceil(t / interval)
    if k * interval < t:
        k += 1
    while k > 0 and (k - 1) * interval >= t:
        k -= 1
    return k


def request_memory(task, granularity: int = GRANULARITY) -> int:
    mem = task.ideal_memory
    return mem if mem % granularity == 0 else round_up(mem, granularity)


class JobView(NamedTuple):
    job_id: int
    submission_time: float
    allocated_memory: int
    tasks: Sequence  # TaskSpec sequence, scheduler's view
    next_task: int  # tasks[next_task:] are pending
    suffix_min_duration: Sequence[float]  # min ideal duration over tasks[i:]


class RunningTask(NamedTuple):
    predicted_finish: float
    alloc_id: int
    node_id: int
    memory: int
    cores: int
    job_id: int
    start_time: float


@dataclass(frozen=True)
class ClusterSnapshot:
    time: float
    heartbeat_interval: float
    free_memory: tuple[int, ...]
    free_cores: tuple[int, ...]
    reservation: tuple[int | None, ...]
    running: tuple[RunningTask, ...]
    jobs: tuple[JobView, ...]
    granularity: int = GRANULARITY


@dataclass
class TimelineEstimate:
    job_id: int
    estimated_completion: float
    tasks: list[tuple[float, float]] = field(default_factory=list)  # (start, finish)


@dataclass(frozen=True)
class CandidatePlacement:
    """A task of ``job_id`` started on ``node_id`` at snapshot time."""

    job_id: int
    node_id: int
    memory: int
    predicted_finish: float
    cores: int = 1


class _Job:
    __slots__ = ("job_id", "submission", "alloc", "tasks", "next", "suffix_min", "est", "reserved", "key",
                 "placed")

    def __init__(self, v: JobView):
        self.job_id = v.job_id
        self.submission = v.submission_time
        self.alloc = v.allocated_memory
        self.tasks = v.tasks
        self.next = v.next_task
        self.suffix_min = v.suffix_min_duration
        self.est = -math.inf
        self.reserved = set()
        self.key = None
        self.placed = None


class Projection:
    """Incrementally advanced forward projection of one snapshot."""

    def __init__(self, snap: ClusterSnapshot, record_tasks: bool = False):
        self.hb = snap.heartbeat_interval
        self.g = snap.granularity
        self.now = snap.time
        self.free_mem = list(snap.free_memory)
        self.free_cores = list(snap.free_cores)
        self.resv = list(snap.reservation)
        self.record = record_tasks
        self.jobs: dict[int, _Job] = {}
        self._fair: list = []
        for v in snap.jobs:
            j = _Job(v)
            if record_tasks:
                j.placed = []
            self.jobs[v.job_id] = j
        for n, r in enumerate(self.resv):
            if r is None:
                continue
            if r in self.jobs:
                self.jobs[r].reserved.add(n)
            else:
                # held by a finished job; the scheduler drops it on its next visit
                self.resv[n] = None
        # ticks strictly after ``now``; overdue running tasks release on the first of them
        first_tick = tick_index(self.now, self.hb)
        if first_tick * self.hb <= self.now:
            first_tick += 1
        overdue = first_tick * self.hb
        self._seq = 0
        self._releases = []
        for rt in snap.running:
            t = rt.predicted_finish if rt.predicted_finish > self.now else overdue
            self._releases.append((t, self._seq, rt.node_id, rt.memory, rt.cores, rt.job_id))
            self._seq += 1
            j = self.jobs.get(rt.job_id)
            if j is not None:
                if t > j.est:
                    j.est = t
                if record_tasks:
                    j.placed.append((rt.start_time, t))
        heapq.heapify(self._releases)
        for j in self.jobs.values():
            self._update_key(j)
        self.starts_on: dict[tuple[int, int], tuple[float, int, int, int]] = {}
        self._dirty = set(range(len(self.free_mem)))
        # the first pass happens at ``now`` itself, then on heartbeat ticks
        self._next_time = self.now
        self._next_k = first_tick - 1
        self._pass_heap = None
        self._pos = -1

    # -- fair-share queue -------------------------------------------------
    def _update_key(self, j: _Job):
        key = (j.alloc, j.submission, j.job_id) if j.next < len(j.tasks) else None
        if key != j.key:
            j.key = key
            if key is not None:
                heapq.heappush(self._fair, key)

    def _head(self):
        fair, jobs = self._fair, self.jobs
        while fair:
            key = fair[0]
            j = jobs[key[2]]
            if j.key == key:
                return j
            heapq.heappop(fair)
        return None

    # -- dirty-node bookkeeping ------------------------------------------
    def _mark_dirty(self, n: int):
        if self._pass_heap is not None and n > self._pos:
            heapq.heappush(self._pass_heap, n)
        else:
            self._dirty.add(n)

    # -- one pass ---------------------------------------------------------
    def _place(self, j: _Job, n: int, t: float, own_reservation: bool):
        task = j.tasks[j.next]
        mem = request_memory(task, self.g)
        key = (j.job_id, n)
        if key not in self.starts_on:
            self.starts_on[key] = (t, self.free_mem[n], self.free_cores[n], mem)
        self.free_mem[n] -= mem
        self.free_cores[n] -= task.cores
        j.alloc += mem
        prev_mem = mem
        j.next += 1
        finish = t + task.ideal_duration
        heapq.heappush(self._releases, (finish, self._seq, n, mem, task.cores, j.job_id))
        self._seq += 1
        if finish > j.est:
            j.est = finish
        if j.placed is not None:
            j.placed.append((t, finish))
        if own_reservation:
            self.resv[n] = None
            j.reserved.discard(n)
        if j.reserved and (j.next >= len(j.tasks) or request_memory(j.tasks[j.next], self.g) != prev_mem):
            for m in sorted(j.reserved):
                self._mark_dirty(m)
        self._update_key(j)

    def _visit(self, n: int, t: float):
        jobs, resv = self.jobs, self.resv
        while True:
            r = resv[n]
            if r is not None:
                j = jobs[r]
                if j.next >= len(j.tasks):
                    resv[n] = None
                    j.reserved.discard(n)
                    r = None
            if r is None:
                j = self._head()
                if j is None:
                    return
            task = j.tasks[j.next]
            if self.free_cores[n] >= task.cores and self.free_mem[n] >= request_memory(task, self.g):
                self._place(j, n, t, own_reservation=r is not None)
                continue
            if r is None:
                resv[n] = j.job_id
                j.reserved.add(n)
            return

    def _release_until(self, t: float):
        rel = self._releases
        while rel and rel[0][0] <= t:
            _, _, n, mem, cores, job_id = heapq.heappop(rel)
            self.free_mem[n] += mem
            self.free_cores[n] += cores
            j = self.jobs.get(job_id)
            if j is not None:
                j.alloc -= mem
                self._update_key(j)
            self._mark_dirty(n)

    def _step(self) -> bool:
        """Run the next pass. Returns False when nothing can change any more."""
        t = self._next_time
        if t == math.inf:
            return False
        self._release_until(t)
        heap = sorted(self._dirty)
        self._dirty = set()
        self._pass_heap = heap
        self._pos = -1
        visited = set()
        while heap:
            n = heapq.heappop(heap)
            if n in visited:
                continue
            visited.add(n)
            self._pos = n
            self._visit(n, t)
        self._pass_heap = None
        self._schedule_next()
        return True

    def _schedule_next(self):
        k = self._next_k + 1
        if not self._dirty:
            if not self._releases:
                self._next_time = math.inf
                return
            k = max(k, tick_index(self._releases[0][0], self.hb))
        self._next_k = k
        self._next_time = k * self.hb

    # -- queries ------------------------------------------------------------
    @property
    def next_pass_time(self) -> float:
        return self._next_time

    def run(self):
        while self._step():
            pass

    def estimate_at_least(self, job_id: int, bound: float) -> float:
        """Lower bound ``L`` on the job's estimated completion.

        Either ``L >= bound`` (certificate that the estimate reaches the
        bound), or ``L`` is the exact estimate and it is below ``bound``.
        ``math.inf`` means the job's pending tasks can never be placed.
        """
        j = self.jobs[job_id]
        while True:
            if j.est >= bound:
                return j.est
            if j.next >= len(j.tasks):
                return j.est
            lb = self._next_time + j.suffix_min[j.next]
            if lb >= bound:
                return lb
            if not self._step():
                return math.inf

    def reserved_start_blocked(self, node_id: int, reserved_job: int, candidate_memory: int,
                               candidate_finish: float, candidate_cores: int = 1) -> bool:
        """Would a candidate on a reserved node delay the reserved job's next start there?

        True iff the projection starts the reserved job on ``node_id`` before
        ``candidate_finish`` and the candidate's resources would not have left
        enough room for it at that moment.
        """
        j = self.jobs[reserved_job]
        key = (reserved_job, node_id)
        while True:
            hit = self.starts_on.get(key)
            if hit is not None:
                t, mem_before, cores_before, task_mem = hit
                if t >= candidate_finish:
                    return False
                return mem_before - candidate_memory < task_mem or cores_before - candidate_cores < 1
            if j.next >= len(j.tasks) or self._next_time >= candidate_finish:
                return False
            if not self._step():
                return False

    def estimates(self) -> dict[int, TimelineEstimate]:
        return {
            jid: TimelineEstimate(jid, j.est, list(j.placed) if j.placed is not None else [])
            for jid, j in self.jobs.items()
        }


def generate(snapshot: ClusterSnapshot) -> dict[int, TimelineEstimate]:
    """Per-job completion estimates for every job in the snapshot."""
    proj = Projection(snapshot, record_tasks=True)
    proj.run()
    out = proj.estimates()
    for jid, est in out.items():
        j = proj.jobs[jid]
        if j.next < len(j.tasks):
            # some pending task never fits anywhere
            est.estimated_completion = math.inf
    return out


def insert_candidate(snapshot: ClusterSnapshot, cand: CandidatePlacement) -> ClusterSnapshot:
    """The snapshot with the candidate's job having started its next task."""
    free_mem = list(snapshot.free_memory)
    free_cores = list(snapshot.free_cores)
    free_mem[cand.node_id] -= cand.memory
    free_cores[cand.node_id] -= cand.cores
    if free_mem[cand.node_id] < 0 or free_cores[cand.node_id] < 0:
        raise ValueError("candidate does not fit on its node")
    jobs = []
    for v in snapshot.jobs:
        if v.job_id == cand.job_id:
            v = v._replace(allocated_memory=v.allocated_memory + cand.memory, next_task=v.next_task + 1)
        jobs.append(v)
    alloc_id = max((r.alloc_id for r in snapshot.running), default=-1) + 1
    running = snapshot.running + (
        RunningTask(cand.predicted_finish, alloc_id, cand.node_id, cand.memory, cand.cores, cand.job_id,
                    snapshot.time),
    )
    return ClusterSnapshot(snapshot.time, snapshot.heartbeat_interval, tuple(free_mem), tuple(free_cores),
                           snapshot.reservation, running, tuple(jobs), snapshot.granularity)


def would_hinder(reserved_job: int, candidate: CandidatePlacement, snapshot: ClusterSnapshot) -> bool:
    """True iff placing ``candidate`` raises the reserved job's estimated completion."""
    if candidate.node_id >= len(snapshot.reservation) or snapshot.reservation[candidate.node_id] is None:
        raise ValueError("would_hinder is only defined for reserved nodes")
    before = Projection(snapshot)
    before.run()
    base = before.jobs[reserved_job].est
    after = Projection(insert_candidate(snapshot, candidate))
    return after.estimate_at_least(reserved_job, math.nextafter(base, math.inf)) > base
