import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from memelastic.models import GB, GRANULARITY, MapperStepModel, ReducerSpillModel
from memelastic.trace import (
    InvalidSpecError,
    JobSpec,
    TaskSpec,
    TraceError,
    TraceGenSpec,
    TraceParseError,
    dumps_trace,
    generate_trace,
    loads_trace,
    read_trace,
    scale_trace,
    total_tasks,
    write_trace,
)


def test_uniform_ranges_are_respected():
    spec = TraceGenSpec(tasks_per_job_range=(1, 300), mem_per_task_range=(1.0, 6.0), duration_range=(1.0, 350.0))
    jobs = generate_trace(spec)
    assert len(jobs) == 100
    for job in jobs:
        assert 0 <= job.submission_time <= 1000
        assert 1 <= len(job.tasks) <= 300
        task = job.tasks[0]
        assert all(t == task for t in job.tasks)
        assert 1 * GB <= task.ideal_memory <= 6 * GB
        assert task.ideal_memory % GRANULARITY == 0
        assert 1.0 <= task.ideal_duration <= 350.0
        assert task.cores == 1


@settings(max_examples=60, deadline=None)
@given(
    dist=st.sampled_from(["uniform", "exponential"]),
    t=st.tuples(st.integers(1, 50), st.integers(0, 200)),
    m=st.tuples(st.floats(0.1, 5.0), st.floats(0.0, 5.0)),
    d=st.tuples(st.floats(1.0, 100.0), st.floats(0.0, 400.0)),
    seed=st.integers(0, 2**32 - 1),
)
def test_generated_values_in_range(dist, t, m, d, seed):
    spec = TraceGenSpec(job_count=20, distribution=dist, tasks_per_job_range=(t[0], t[0] + t[1]),
                        mem_per_task_range=(m[0], m[0] + m[1] + 0.1), duration_range=(d[0], d[0] + d[1] + 1),
                        seed=seed)
    for job in generate_trace(spec):
        assert spec.tasks_per_job_range[0] <= len(job.tasks) <= spec.tasks_per_job_range[1]
        task = job.tasks[0]
        assert spec.mem_per_task_range[0] * GB <= task.ideal_memory <= spec.mem_per_task_range[1] * GB
        assert spec.duration_range[0] <= task.ideal_duration <= spec.duration_range[1]


def test_same_seed_same_bytes():
    spec = TraceGenSpec(distribution="exponential", seed=7)
    assert dumps_trace(generate_trace(spec)) == dumps_trace(generate_trace(spec))
    assert dumps_trace(generate_trace(spec)) != dumps_trace(generate_trace(TraceGenSpec(distribution="exponential")))


def test_arrival_mean_over_seeds():
    means = [np.mean([j.submission_time for j in generate_trace(TraceGenSpec(seed=s))]) for s in range(50)]
    assert abs(np.mean(means) - 500.0) <= 60.0


def test_exponential_mass_near_minimum():
    spec = TraceGenSpec(job_count=2000, distribution="exponential", tasks_per_job_range=(1, 301))
    counts = np.array([len(j.tasks) for j in generate_trace(spec)])
    # mean (max - min) / 3 = 100, so the median sits near 1 + 100 ln 2
    assert 50 < np.median(counts) < 90


def test_round_trip(tmp_path):
    jobs = generate_trace(TraceGenSpec(job_count=30, seed=3))
    path = tmp_path / "trace.jsonl"
    write_trace(jobs, path)
    assert read_trace(path) == jobs
    # identical tasks are run-length encoded
    first = json.loads(path.read_text().splitlines()[0])
    assert len(first["tasks"]) == 1
    assert first["tasks"][0].get("count", 1) == len(jobs[0].tasks)


def test_round_trip_other_models():
    red = ReducerSpillModel(80.0, 2 * GB, 1.4e9, 5e7, 0.7, 1.5, 0.2)
    mapper = MapperStepModel(10.0, 1 * GB, 13.5)
    jobs = [JobSpec(4, 2.5, (TaskSpec(2 * GB, 80.0, red), TaskSpec(1 * GB, 10.0, mapper, 1e6)))]
    assert loads_trace(dumps_trace(jobs)) == jobs


def test_empty_trace(tmp_path):
    path = tmp_path / "empty.jsonl"
    write_trace([], path)
    assert read_trace(path) == []
    assert generate_trace(TraceGenSpec(job_count=0)) == []


def test_comments_and_blank_lines():
    text = "# header\n\n" + dumps_trace(generate_trace(TraceGenSpec(job_count=2)))
    assert len(loads_trace(text)) == 2


def test_negative_submission_is_a_parse_error():
    good = dumps_trace(generate_trace(TraceGenSpec(job_count=2))).splitlines()
    rec = json.loads(good[1])
    rec["submission_time"] = -1
    with pytest.raises(TraceParseError) as err:
        loads_trace(good[0] + "\n" + json.dumps(rec) + "\n")
    assert err.value.line == 2
    assert "line 2" in str(err.value)


@pytest.mark.parametrize("line", [
    "{not json",
    '{"job_id": 1, "submission_time": 0}',
    '{"job_id": 1, "submission_time": 0, "tasks": []}',
    '{"job_id": 1, "submission_time": 0, "tasks": [{"ideal_memory": 1000, "ideal_duration": 1, '
    '"model": {"kind": "sim_penalty"}}]}',
    '{"job_id": 1, "submission_time": 0, "tasks": [{"ideal_memory": 1000000000, "ideal_duration": 1, '
    '"model": {"kind": "bogus"}}]}',
])
def test_malformed_records(line):
    with pytest.raises(TraceParseError):
        loads_trace(line)


def test_invalid_specs():
    with pytest.raises(InvalidSpecError):
        TraceGenSpec(tasks_per_job_range=(5, 1))
    with pytest.raises(InvalidSpecError):
        TraceGenSpec(distribution="normal")
    with pytest.raises(InvalidSpecError):
        TraceGenSpec(mem_per_task_range=(0.01, 0.05))
    with pytest.raises(InvalidSpecError):
        TraceGenSpec(duration_range=(0.0, 10.0))


def test_task_invariants():
    from memelastic.models import SimPenaltyModel

    with pytest.raises(TraceError):
        TaskSpec.sim_penalty(50 * 10**6, 10.0)
    with pytest.raises(TraceError):
        TaskSpec(GB, 10.0, SimPenaltyModel(10.0, GB), cores=2)
    with pytest.raises(TraceError):
        TaskSpec(GB, 10.0, SimPenaltyModel(20.0, GB))
    with pytest.raises(TraceError):
        JobSpec(0, 0.0, ())
    # default spill bandwidth: 70% of ideal memory over the ideal duration
    assert TaskSpec.sim_penalty(GB, 10.0).disk_rate_demand == pytest.approx(0.7 * GB / 10.0)


def test_scale_trace():
    jobs = generate_trace(TraceGenSpec(job_count=10))
    big = scale_trace(jobs, 3)
    assert len(big) == 30
    assert len({j.job_id for j in big}) == 30
    assert total_tasks(big) == 3 * total_tasks(jobs)
    assert [j.submission_time for j in big] == sorted(j.submission_time for j in big)
