"""Compiled twin of :class:`memelastic.timeline.Projection` used by the engine.

Same policy and the same pass schedule, on flat arrays. Jobs are dense
indices, tasks live in one flat array and a job's pending tasks are
``tasks[next[j]:end[j]]``. Only the first start of each node's
snapshot-reserving job is recorded, which is all the hinder check asks.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

# int scalars
_REL_N, _FAIR_N, _SEQ, _NEXT_K, _IN_PASS, _POS, _DQ_N, _NL_N = range(8)
# float scalars
_NEXT_T, _HB, _NOW = range(3)


@njit(cache=True, inline="always", _nrt=False)
def _tick_index(t, hb):
    k = math.ceil(t / hb)
    if k * hb < t:
        k += 1
    while k > 0 and (k - 1) * hb >= t:
        k -= 1
    return k


# -- release heap: entry ids ordered by (time, id) ---------------------------
@njit(cache=True, inline="always", _nrt=False)
def _rel_push(H, iv, t, node, mem, cores, job):
    st, sn, sm, sc, sj, hp = H
    s = iv[_SEQ]
    iv[_SEQ] += 1
    st[s] = t
    sn[s] = node
    sm[s] = mem
    sc[s] = cores
    sj[s] = job
    i = iv[_REL_N]
    iv[_REL_N] += 1
    while i > 0:
        p = (i - 1) >> 1
        q = hp[p]
        if st[q] > t or (st[q] == t and q > s):
            hp[i] = q
            i = p
        else:
            break
    hp[i] = s


@njit(cache=True, inline="always", _nrt=False)
def _rel_pop(H, iv):
    st, hp = H[0], H[5]
    top = hp[0]
    n = iv[_REL_N] - 1
    iv[_REL_N] = n
    if n == 0:
        return top
    s = hp[n]
    t = st[s]
    i = 0
    while True:
        c = 2 * i + 1
        if c >= n:
            break
        a = hp[c]
        if c + 1 < n:
            b = hp[c + 1]
            if st[b] < st[a] or (st[b] == st[a] and b < a):
                c += 1
                a = b
        if st[a] < t or (st[a] == t and a < s):
            hp[i] = a
            i = c
        else:
            break
    hp[i] = s
    return top


# -- fair-share heap of jobs with pending tasks, keyed in place --------------
@njit(cache=True, inline="always", _nrt=False)
def _fair_less(J, a, b):
    jalloc, jsub, jid = J[0], J[1], J[7]
    if jalloc[a] != jalloc[b]:
        return jalloc[a] < jalloc[b]
    if jsub[a] != jsub[b]:
        return jsub[a] < jsub[b]
    return jid[a] < jid[b]


@njit(cache=True, inline="always", _nrt=False)
def _fair_up(J, F, i):
    fpos = J[5]
    j = F[i]
    while i > 0:
        p = (i - 1) >> 1
        q = F[p]
        if _fair_less(J, j, q):
            F[i] = q
            fpos[q] = i
            i = p
        else:
            break
    F[i] = j
    fpos[j] = i


@njit(cache=True, inline="always", _nrt=False)
def _fair_down(J, F, i, n):
    fpos = J[5]
    j = F[i]
    while True:
        c = 2 * i + 1
        if c >= n:
            break
        a = F[c]
        if c + 1 < n and _fair_less(J, F[c + 1], a):
            c += 1
            a = F[c]
        if _fair_less(J, a, j):
            F[i] = a
            fpos[a] = i
            i = c
        else:
            break
    F[i] = j
    fpos[j] = i


@njit(cache=True, inline="always", _nrt=False)
def _update_key(J, F, iv, j, grew):
    """Restore heap order after job ``j`` changed allocation or ran out of tasks."""
    jnext, jend, fpos = J[2], J[3], J[5]
    i = fpos[j]
    if i < 0:
        return
    if jnext[j] < jend[j]:
        if grew:
            _fair_down(J, F, i, iv[_FAIR_N])
        else:
            _fair_up(J, F, i)
        return
    # remove: move the last entry into the hole
    n = iv[_FAIR_N] - 1
    iv[_FAIR_N] = n
    fpos[j] = -1
    if i == n:
        return
    moved = F[n]
    F[i] = moved
    fpos[moved] = i
    _fair_up(J, F, i)
    _fair_down(J, F, fpos[moved], n)


# -- dirty nodes: a min-heap for this pass, a list for the next -------------
@njit(cache=True, inline="always", _nrt=False)
def _dq_push(D, iv, n):
    flag, dq = D[0], D[1]
    flag[n] = 1
    i = iv[_DQ_N]
    iv[_DQ_N] += 1
    while i > 0:
        p = (i - 1) >> 1
        if dq[p] > n:
            dq[i] = dq[p]
            i = p
        else:
            break
    dq[i] = n


@njit(cache=True, inline="always", _nrt=False)
def _dq_pop(D, iv):
    flag, dq = D[0], D[1]
    top = dq[0]
    flag[top] = 0
    n = iv[_DQ_N] - 1
    iv[_DQ_N] = n
    if n > 0:
        x = dq[n]
        i = 0
        while True:
            c = 2 * i + 1
            if c >= n:
                break
            if c + 1 < n and dq[c + 1] < dq[c]:
                c += 1
            if dq[c] < x:
                dq[i] = dq[c]
                i = c
            else:
                break
        dq[i] = x
    return top


@njit(cache=True, inline="always", _nrt=False)
def _mark_dirty(D, iv, n):
    flag, nflag, nl = D[0], D[2], D[3]
    if iv[_IN_PASS] and n <= iv[_POS]:
        if not nflag[n]:
            nflag[n] = 1
            nl[iv[_NL_N]] = n
            iv[_NL_N] += 1
    elif not flag[n]:
        _dq_push(D, iv, n)


# -- one pass ---------------------------------------------------------------
@njit(cache=True, inline="always", _nrt=False)
def _place(N, J, T, H, F, D, R, iv, j, n, t, own):
    free_mem, free_cores, resv, snap_resv = N
    jalloc, jnext, jend, jest, jres = J[0], J[2], J[3], J[4], J[6]
    t_mem, t_dur, t_cores = T[0], T[1], T[2]
    r_t, r_mem_before, r_cores_before, r_task_mem = R
    ti = jnext[j]
    mem = t_mem[ti]
    cores = t_cores[ti]
    if snap_resv[n] == j and r_t[n] == np.inf:
        r_t[n] = t
        r_mem_before[n] = free_mem[n]
        r_cores_before[n] = free_cores[n]
        r_task_mem[n] = mem
    free_mem[n] -= mem
    free_cores[n] -= cores
    jalloc[j] += mem
    jnext[j] = ti + 1
    finish = t + t_dur[ti]
    _rel_push(H, iv, finish, n, mem, cores, j)
    if finish > jest[j]:
        jest[j] = finish
    if own:
        resv[n] = -1
        jres[j] -= 1
    if jres[j] > 0 and (ti + 1 >= jend[j] or t_mem[ti + 1] != mem):
        for m in range(resv.shape[0]):
            if resv[m] == j:
                _mark_dirty(D, iv, m)
    _update_key(J, F, iv, j, True)


@njit(cache=True, inline="always", _nrt=False)
def _visit(N, J, T, H, F, D, R, iv, n, t):
    free_mem, free_cores, resv = N[0], N[1], N[2]
    jnext, jend, jres = J[2], J[3], J[6]
    t_mem, t_cores = T[0], T[2]
    while True:
        r = resv[n]
        if r >= 0 and jnext[r] >= jend[r]:
            resv[n] = -1
            jres[r] -= 1
            r = -1
        if r < 0:
            if iv[_FAIR_N] == 0:
                return
            j = F[0]
        else:
            j = r
        ti = jnext[j]
        if free_cores[n] >= t_cores[ti] and free_mem[n] >= t_mem[ti]:
            _place(N, J, T, H, F, D, R, iv, j, n, t, r >= 0)
            continue
        if r < 0:
            resv[n] = j
            jres[j] += 1
        return


@njit(cache=True, _nrt=False)
def _step(N, J, T, H, F, D, R, iv, fv):
    t = fv[_NEXT_T]
    if t == np.inf:
        return False
    free_mem, free_cores = N[0], N[1]
    jalloc = J[0]
    st, sn, sm, sc, sj, hp = H
    while iv[_REL_N] > 0 and st[hp[0]] <= t:
        s = _rel_pop(H, iv)
        n = sn[s]
        free_mem[n] += sm[s]
        free_cores[n] += sc[s]
        j = sj[s]
        jalloc[j] -= sm[s]
        _update_key(J, F, iv, j, False)
        _mark_dirty(D, iv, n)
    iv[_IN_PASS] = 1
    while iv[_DQ_N] > 0:
        n = _dq_pop(D, iv)
        iv[_POS] = n
        _visit(N, J, T, H, F, D, R, iv, n, t)
    iv[_IN_PASS] = 0
    iv[_POS] = -1
    nflag, nl = D[2], D[3]
    anyd = iv[_NL_N] > 0
    for i in range(iv[_NL_N]):
        n = nl[i]
        nflag[n] = 0
        _dq_push(D, iv, n)
    iv[_NL_N] = 0
    k = iv[_NEXT_K] + 1
    if not anyd:
        if iv[_REL_N] == 0:
            fv[_NEXT_T] = np.inf
            return True
        k = max(k, _tick_index(st[hp[0]], fv[_HB]))
    iv[_NEXT_K] = k
    fv[_NEXT_T] = k * fv[_HB]
    return True


@njit(cache=True, _nrt=False)
def _init(N, J, H, F, D, iv, fv, run_t, run_node, run_mem, run_cores, run_job, active):
    now = fv[_NOW]
    hb = fv[_HB]
    first = _tick_index(now, hb)
    if first * hb <= now:
        first += 1
    overdue = first * hb
    jnext, jend, jest, fpos, jres = J[2], J[3], J[4], J[5], J[6]
    for i in range(run_t.shape[0]):
        t = run_t[i] if run_t[i] > now else overdue
        _rel_push(H, iv, t, run_node[i], run_mem[i], run_cores[i], run_job[i])
        if t > jest[run_job[i]]:
            jest[run_job[i]] = t
    resv = N[2]
    for n in range(resv.shape[0]):
        if resv[n] >= 0:
            jres[resv[n]] += 1
    for j in range(active.shape[0]):
        if active[j] and jnext[j] < jend[j]:
            i = iv[_FAIR_N]
            iv[_FAIR_N] += 1
            F[i] = j
            _fair_up(J, F, i)
    # node ids in ascending order already form a heap
    flag, dq = D[0], D[1]
    for n in range(flag.shape[0]):
        flag[n] = 1
        dq[n] = n
    iv[_DQ_N] = flag.shape[0]
    fv[_NEXT_T] = now
    iv[_NEXT_K] = first - 1
    iv[_POS] = -1


@njit(cache=True, _nrt=False)
def _crowded(N, T, H, D, iv, lo, hi, horizon):
    """True if the pending tasks ``lo:hi`` cannot all be running at once by ``horizon``.

    Resources free now plus everything released before ``horizon`` are
    compared with what the tasks need together. Fragmentation and other
    jobs are ignored, so a True answer is safe.
    """
    p_mem, p_cores = T[4], T[5]
    need_mem = p_mem[hi] - p_mem[lo]
    need_cores = p_cores[hi] - p_cores[lo]
    mem = 0
    cores = 0
    free_mem, free_cores = N[0], N[1]
    for n in range(free_mem.shape[0]):
        mem += free_mem[n]
        cores += free_cores[n]
    if mem >= need_mem and cores >= need_cores:
        return False
    st, sm, sc, hp = H[0], H[2], H[3], H[5]
    # heap walk that skips subtrees released at or after the horizon
    n = iv[_REL_N]
    # depth-first with two children pushed per pop, so the stack stays within tree depth + 1
    stack = D[4]
    top = 0
    if n > 0:
        stack[0] = 0
        top = 1
    while top > 0:
        top -= 1
        i = stack[top]
        s = hp[i]
        if st[s] >= horizon:
            continue
        mem += sm[s]
        cores += sc[s]
        if mem >= need_mem and cores >= need_cores:
            return False
        c = 2 * i + 1
        if c < n:
            stack[top] = c
            top += 1
            if c + 1 < n:
                stack[top] = c + 1
                top += 1
    return True


@njit(cache=True, _nrt=False)
def _estimate_at_least(N, J, T, H, F, D, R, iv, fv, j, bound):
    jnext, jend, jest = J[2], J[3], J[4]
    t_sufmin = T[3]
    while True:
        if jest[j] >= bound or jnext[j] >= jend[j]:
            return jest[j]
        dmin = t_sufmin[jnext[j]]
        lb = fv[_NEXT_T] + dmin
        if lb >= bound:
            return lb
        # Pending tasks start no earlier than the next pass and run at least
        # dmin. If they cannot all be resident before next + dmin, the last
        # one starts at or after next + dmin, so the job ends after next + 2 dmin.
        if lb + dmin >= bound and _crowded(N, T, H, D, iv, jnext[j], jend[j], lb):
            return lb + dmin
        if not _step(N, J, T, H, F, D, R, iv, fv):
            return np.inf


@njit(cache=True, _nrt=False)
def _reserved_start_blocked(N, J, T, H, F, D, R, iv, fv, n, j, cmem, cfinish, ccores):
    jnext, jend = J[2], J[3]
    r_t, r_mem_before, r_cores_before, r_task_mem = R
    while True:
        if r_t[n] != np.inf:
            if r_t[n] >= cfinish:
                return False
            return r_mem_before[n] - cmem < r_task_mem[n] or r_cores_before[n] - ccores < 1
        if jnext[j] >= jend[j] or fv[_NEXT_T] >= cfinish:
            return False
        if not _step(N, J, T, H, F, D, R, iv, fv):
            return False


class TaskTable:
    """Flat per-task arrays of a trace's scheduler view (request memory on the grid)."""

    def __init__(self, jobs, granularity: int):
        from .timeline import request_memory

        count = sum(len(j.tasks) for j in jobs)
        self.mem = np.empty(count, dtype=np.int64)
        self.dur = np.empty(count, dtype=np.float64)
        self.cores = np.empty(count, dtype=np.int64)
        self.sufmin = np.empty(count + 1, dtype=np.float64)
        self.start = np.empty(len(jobs), dtype=np.int64)
        self.end = np.empty(len(jobs), dtype=np.int64)
        # fair-share ties break on job id, as in the reference projection
        self.job_id = np.array([j.job_id for j in jobs], dtype=np.int64)
        i = 0
        for k, job in enumerate(jobs):
            self.start[k] = i
            for task in job.tasks:
                self.mem[i] = request_memory(task, granularity)
                self.dur[i] = task.ideal_duration
                self.cores[i] = task.cores
                i += 1
            self.end[k] = i
        self.sufmin[count] = np.inf
        for k in range(len(jobs)):
            m = np.inf
            for i in range(self.end[k] - 1, self.start[k] - 1, -1):
                m = min(m, self.dur[i])
                self.sufmin[i] = m
        self.p_mem = np.concatenate(([0], np.cumsum(self.mem))).astype(np.int64)
        self.p_cores = np.concatenate(([0], np.cumsum(self.cores))).astype(np.int64)
        self.T = (self.mem, self.dur, self.cores, self.sufmin, self.p_mem, self.p_cores)


class FastProjection:
    """Projection of live engine state; job arguments are dense job indices."""

    def __init__(self, table: TaskTable, now: float, hb: float, free_mem, free_cores, resv, jalloc, jnext, jsub,
                 active, run_t, run_node, run_mem, run_cores, run_job):
        nn = free_mem.shape[0]
        nj = jalloc.shape[0]
        live = active.astype(bool)
        resv = resv.copy()
        self.N = (free_mem.copy(), free_cores.copy(), resv, resv.copy())
        jnext = jnext.copy()
        # jobs that have not arrived hold no pending work in the projection
        jend = np.where(live, table.end, jnext)
        self.J = (jalloc.copy(), jsub, jnext, jend, np.full(nj, -np.inf), np.full(nj, -1, dtype=np.int64),
                  np.zeros(nj, dtype=np.int64), table.job_id)
        self.T = table.T
        cap = run_t.shape[0] + int((jend - jnext).sum()) + 1
        self.H = (np.empty(cap), np.empty(cap, dtype=np.int64), np.empty(cap, dtype=np.int64),
                  np.empty(cap, dtype=np.int64), np.empty(cap, dtype=np.int64), np.empty(cap, dtype=np.int64))
        self.F = np.empty(nj, dtype=np.int64)
        self.D = (np.zeros(nn, dtype=np.uint8), np.empty(nn, dtype=np.int64), np.zeros(nn, dtype=np.uint8),
                  np.empty(nn, dtype=np.int64), np.empty(66, dtype=np.int64))
        self.R = (np.full(nn, np.inf), np.zeros(nn, dtype=np.int64), np.zeros(nn, dtype=np.int64),
                  np.zeros(nn, dtype=np.int64))
        self.iv = np.zeros(8, dtype=np.int64)
        self.fv = np.array([0.0, hb, now])
        _init(self.N, self.J, self.H, self.F, self.D, self.iv, self.fv, run_t, run_node, run_mem, run_cores,
              run_job, active)

    @property
    def next_pass_time(self) -> float:
        return float(self.fv[_NEXT_T])

    def step(self) -> bool:
        return _step(self.N, self.J, self.T, self.H, self.F, self.D, self.R, self.iv, self.fv)

    def run(self) -> int:
        return _run(self.N, self.J, self.T, self.H, self.F, self.D, self.R, self.iv, self.fv)

    def estimate(self, j: int) -> float:
        return float(self.J[4][j])

    def estimate_at_least(self, j: int, bound: float) -> float:
        return _estimate_at_least(self.N, self.J, self.T, self.H, self.F, self.D, self.R, self.iv, self.fv, j,
                                  bound)

    def reserved_start_blocked(self, node_id: int, j: int, memory: int, finish: float, cores: int = 1) -> bool:
        if self.N[3][node_id] != j:
            raise ValueError("hinder check is only defined for the node's reserving job")
        return _reserved_start_blocked(self.N, self.J, self.T, self.H, self.F, self.D, self.R, self.iv, self.fv,
                                       node_id, j, memory, finish, cores)


@njit(cache=True, _nrt=False)
def _run(N, J, T, H, F, D, R, iv, fv):
    steps = 0
    while _step(N, J, T, H, F, D, R, iv, fv):
        steps += 1
    return steps
