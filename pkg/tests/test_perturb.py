import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import job
from memelastic.engine import SimConfig, run_simulation
from memelastic.models import GB, GRANULARITY
from memelastic.perturb import PerturbError, PerturbSpec, apply
from memelastic.trace import TraceGenSpec, generate_trace


def _trace(seed=0, jobs=10):
    return generate_trace(TraceGenSpec(job_count=jobs, tasks_per_job_range=(1, 30), seed=seed))


@pytest.mark.parametrize("target", ["duration", "memory", "penalty"])
def test_zero_interval_is_identity(target):
    trace = _trace()
    view, truth = apply(trace, PerturbSpec(target, (0.0, 0.0)))
    assert view == trace and truth == trace


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), hi=st.floats(0.01, 1.0))
def test_duration_factor_per_task(seed, hi):
    trace = _trace(3)
    view, truth = apply(trace, PerturbSpec("duration", (0.0, hi), seed=seed))
    assert view == trace
    for orig, actual in zip(trace, truth):
        for a, b in zip(orig.tasks, actual.tasks):
            assert a.ideal_duration < b.ideal_duration <= a.ideal_duration * (1 + hi) * (1 + 1e-12)
            assert b.ideal_memory == a.ideal_memory


def test_duration_differs_within_a_job():
    trace = [job(0, 0.0, 50, 2, 100.0)]
    _, truth = apply(trace, PerturbSpec("duration", (0.0, 0.15), seed=1))
    assert len({t.ideal_duration for t in truth[0].tasks}) == 50


def test_negative_sign():
    trace = [job(0, 0.0, 50, 2, 100.0)]
    _, truth = apply(trace, PerturbSpec("duration", (0.0, 0.15), sign="neg", seed=1))
    for t in truth[0].tasks:
        assert 85.0 <= t.ideal_duration < 100.0


def test_memory_factor_per_job():
    trace = _trace(5)
    view, truth = apply(trace, PerturbSpec("memory", (0.2, 0.5), seed=9), memory_cap=10 * GB)
    assert truth == trace
    for orig, seen in zip(trace, view):
        assert len(set(seen.tasks)) == 1
        m0, m1 = orig.tasks[0].ideal_memory, seen.tasks[0].ideal_memory
        assert m1 % GRANULARITY == 0
        assert m1 <= 10 * GB
        assert m1 == 10 * GB or 1.2 * m0 < m1 <= 1.5 * m0 + GRANULARITY


def test_memory_cap_keeps_tasks_placeable():
    trace = [job(0, 0.0, 3, 9, 10.0)]
    view, _ = apply(trace, PerturbSpec("memory", (0.5, 0.5)), memory_cap=10 * GB)
    assert view[0].tasks[0].ideal_memory == 10 * GB
    uncapped, _ = apply(trace, PerturbSpec("memory", (0.5, 0.5)))
    assert uncapped[0].tasks[0].ideal_memory > 10 * GB


def test_penalty_perturbation():
    trace = [job(0, 0.0, 3, 2, 10.0, penalty=2.0)]
    view, truth = apply(trace, PerturbSpec("penalty", (0.5, 0.5)))
    assert view[0].tasks[0].model.max_penalty == pytest.approx(3.0)
    assert truth == trace
    with pytest.raises(PerturbError):
        apply([job(0, 0.0, 1, 2, 10.0, penalty=1.1)], PerturbSpec("penalty", (0.5, 0.5), sign="neg"))


def test_deterministic_in_seed():
    trace = _trace(2)
    spec = PerturbSpec("duration", (0.0, 0.3), seed=4)
    assert apply(trace, spec) == apply(trace, spec)
    assert apply(trace, spec) != apply(trace, PerturbSpec("duration", (0.0, 0.3), seed=5))


def test_invalid_specs():
    with pytest.raises(PerturbError):
        PerturbSpec("cores", (0.0, 0.1))
    with pytest.raises(PerturbError):
        PerturbSpec("duration", (0.2, 0.1))
    with pytest.raises(PerturbError):
        PerturbSpec("duration", (0.0, 0.1), sign="both")
    assert PerturbSpec("duration", (0.0, 0.15), sign="neg").bounds == (-0.15, 0.0)


def test_truth_drives_runtime_view_drives_plan():
    trace = [job(0, 0.0, 1, 2, 100.0)]
    view, truth = apply(trace, PerturbSpec("duration", (0.5, 0.5)))
    result = run_simulation(SimConfig(node_count=1, record_node_samples=False), view, truth)
    (t,) = result.tasks
    assert t.runtime == 150.0
    assert t.predicted_runtime == 100.0
