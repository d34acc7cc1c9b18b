import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import job
from memelastic.engine import SimConfig, Simulation
from memelastic.models import GB
from memelastic.timeline import (
    CandidatePlacement,
    ClusterSnapshot,
    JobView,
    Projection,
    RunningTask,
    generate,
    would_hinder,
)
from memelastic.trace import TraceGenSpec, generate_trace


def view(spec, allocated=0, next_task=0):
    durs = [t.ideal_duration for t in spec.tasks]
    suffix = [min(durs[i:]) for i in range(len(durs))] + [math.inf]
    return JobView(spec.job_id, spec.submission_time, allocated, spec.tasks, next_task, suffix)


def snapshot(jobs, free_mem=(10 * GB,), free_cores=(16,), reservation=None, running=(), now=0.0):
    return ClusterSnapshot(now, 1.0, tuple(free_mem), tuple(free_cores),
                           tuple(reservation or (None,) * len(free_mem)), tuple(running), tuple(jobs))


def test_one_task_at_a_time():
    # a 6 GB node fits one 4 GB task at a time: three back to back
    snap = snapshot([view(job(0, 0.0, 3, 4, 30.0))], free_mem=(6 * GB,))
    est = generate(snap)[0]
    assert est.estimated_completion == 90.0
    assert est.tasks == [(0.0, 30.0), (30.0, 60.0), (60.0, 90.0)]


def test_running_then_queued_on_one_slot():
    spec = job(0, 0.0, 2, 1, 50.0)
    run = RunningTask(10.0, 0, 0, 1 * GB, 1, 0, -40.0)
    snap = snapshot([view(spec, allocated=1 * GB, next_task=1)], free_mem=(9 * GB,), free_cores=(0,),
                    running=(run,))
    assert generate(snap)[0].estimated_completion == 60.0


def test_estimate_is_latest_task_finish():
    snap = snapshot([view(job(0, 0.0, 20, 1, 7.0)), view(job(1, 0.0, 5, 3, 11.0))], free_cores=(4,))
    for est in generate(snap).values():
        assert est.estimated_completion == max(f for _, f in est.tasks)


def test_unplaceable_job_never_completes():
    snap = snapshot([view(job(0, 0.0, 1, 8, 10.0))], free_mem=(6 * GB,))
    assert generate(snap)[0].estimated_completion == math.inf


def test_reservation_is_honoured():
    # node 0 is reserved for job 0: job 1 has room there at 0 s but waits until the
    # reservation is used at 5 s
    snap = snapshot([view(job(0, 0.0, 1, 8, 10.0)), view(job(1, 1.0, 1, 1, 10.0))], free_mem=(2 * GB, 0),
                    free_cores=(16, 16), reservation=(0, None),
                    running=(RunningTask(5.0, 0, 0, 8 * GB, 1, 99, 0.0), RunningTask(20.0, 1, 1, 10 * GB, 1, 99, 0.0)))
    est = generate(snap)
    assert est[0].tasks == [(5.0, 15.0)]
    assert est[1].tasks == [(5.0, 15.0)]
    alone = generate(snapshot(snap.jobs[1:], free_mem=(2 * GB, 0), free_cores=(16, 16), running=snap.running))
    assert alone[1].tasks == [(0.0, 10.0)]


def test_reservation_of_a_finished_job_is_ignored():
    # job 7 is gone from the snapshot but still named on node 0
    snap = snapshot([view(job(1, 0.0, 1, 2, 10.0))], reservation=(7,))
    assert generate(snap)[1].tasks == [(0.0, 10.0)]


def test_generate_is_pure():
    snap = snapshot([view(job(0, 0.0, 10, 3, 13.0)), view(job(1, 0.5, 4, 5, 9.0))])
    a = generate(snap)
    b = generate(snap)
    assert {k: (v.estimated_completion, v.tasks) for k, v in a.items()} == \
        {k: (v.estimated_completion, v.tasks) for k, v in b.items()}


# -- hinder check ----------------------------------------------------------------
def _hinder_snapshot():
    # node: 6 GB busy until 10 s, 4 GB free; job 1 (8 GB task) holds the reservation and starts at 10 s
    return snapshot([view(job(1, 0.0, 1, 8, 50.0)), view(job(2, 0.0, 1, 4, 40.0))], free_mem=(4 * GB,),
                    reservation=(1,), running=(RunningTask(10.0, 0, 0, 6 * GB, 1, 0, 0.0),))


def test_hinder_false_when_candidate_finishes_first():
    snap = _hinder_snapshot()
    cand = CandidatePlacement(2, 0, 4 * GB, 5.0)
    assert not would_hinder(1, cand, snap)
    assert not Projection(snap).reserved_start_blocked(0, 1, 4 * GB, 5.0)


def test_hinder_true_when_candidate_takes_the_room():
    snap = _hinder_snapshot()
    # with the candidate holding 4 GB until 40 s, only 6 GB are free at 10 s
    cand = CandidatePlacement(2, 0, 4 * GB, 40.0)
    assert would_hinder(1, cand, snap)
    assert Projection(snap).reserved_start_blocked(0, 1, 4 * GB, 40.0)
    before = generate(snap)[1].estimated_completion
    after = generate(snapshot([view(job(1, 0.0, 1, 8, 50.0))], free_mem=(0,), reservation=(1,),
                              running=(RunningTask(10.0, 0, 0, 6 * GB, 1, 0, 0.0),
                                       RunningTask(40.0, 1, 0, 4 * GB, 1, 2, 0.0))))[1].estimated_completion
    assert (before, after) == (60.0, 90.0)


def test_hinder_small_candidate_leaves_room():
    snap = _hinder_snapshot()
    cand = CandidatePlacement(2, 0, 2 * GB, 40.0)
    assert not would_hinder(1, cand, snap)
    assert not Projection(snap).reserved_start_blocked(0, 1, 2 * GB, 40.0)


def test_hinder_needs_a_reserved_node():
    snap = snapshot([view(job(1, 0.0, 1, 8, 50.0))])
    with pytest.raises(ValueError):
        would_hinder(1, CandidatePlacement(1, 0, GB, 5.0), snap)


# -- oracle agreement --------------------------------------------------------------
def _frozen_queue_trace(seed):
    return [j.__class__(j.job_id, 0.0, j.tasks) for j in generate_trace(TraceGenSpec(
        job_count=8, tasks_per_job_range=(1, 40), mem_per_task_range=(1.0, 9.0), duration_range=(1.0, 60.0),
        seed=seed))]


def _snapshots_during_run(sim, every=1):
    """Generator output at the start of every pass, with the engine's later completions."""
    taken = []
    orig = sim._pass
    count = [0]

    def spy():
        if count[0] % every == 0:
            taken.append(generate(sim.snapshot()))
        count[0] += 1
        orig()

    sim._pass = spy
    result = sim.run()
    return taken, {j.job_id: j.completion_time for j in result.jobs}


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), nodes=st.integers(1, 4))
def test_estimates_match_simulation_without_elasticity(seed, nodes):
    sim = Simulation(SimConfig(node_count=nodes, record_node_samples=False), _frozen_queue_trace(seed))
    taken, actual = _snapshots_during_run(sim)
    assert taken
    for est in taken:
        for jid, e in est.items():
            assert e.estimated_completion == actual[jid]


def _grow(seed, extra, target):
    jobs = _frozen_queue_trace(seed)
    snap = snapshot([view(j) for j in jobs], free_mem=(10 * GB,) * 2, free_cores=(16,) * 2)
    grown = list(snap.jobs)
    spec = jobs[target]
    grown[target] = view(spec.__class__(spec.job_id, 0.0, spec.tasks + spec.tasks[-1:] * extra))
    return generate(snap), generate(snapshot(grown, free_mem=(10 * GB,) * 2, free_cores=(16,) * 2))


# The generator replays greedy fair-share placement, which has list-scheduling
# anomalies: one more queued task can reorder later placements and finish another
# job sooner. Kept strict so a change that makes it hold gets noticed.
@pytest.mark.xfail(strict=True, reason="greedy list-scheduling anomaly; see the counterexample below")
@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), extra=st.integers(1, 5), target=st.integers(0, 7))
def test_adding_queued_work_never_lowers_estimates(seed, extra, target):
    base, more = _grow(seed, extra, target)
    for jid, e in base.items():
        assert more[jid].estimated_completion >= e.estimated_completion


def test_queued_work_anomaly_counterexample():
    base, more = _grow(0, 1, 0)
    assert more[0].estimated_completion >= base[0].estimated_completion
    assert (base[2].estimated_completion, more[2].estimated_completion) == (1008.0, 954.0)


# -- compiled projection ---------------------------------------------------------
@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10**6), nodes=st.integers(1, 6), shuffle=st.booleans())
def test_compiled_projection_matches_reference(seed, nodes, shuffle):
    trace = generate_trace(TraceGenSpec(job_count=15, tasks_per_job_range=(1, 60), mem_per_task_range=(0.5, 9.0),
                                        duration_range=(1.0, 80.0), arrival_window=120.0, seed=seed))
    if shuffle:
        # job ids out of trace order exercise the fair-share tie-break
        trace = [j.__class__(100 - j.job_id, round(j.submission_time / 20) * 20, j.tasks) for j in trace]
    cfg = SimConfig(node_count=nodes, scheduler="yarn-me", record_node_samples=False)
    fast = Simulation(cfg, trace).run()
    ref = Simulation(cfg, trace, reference_projection=True).run()
    assert fast.tasks == ref.tasks
