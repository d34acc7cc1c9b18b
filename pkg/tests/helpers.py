"""Small trace builders shared by the tests."""

from memelastic.engine import SimConfig, Simulation
from memelastic.models import GB, MB
from memelastic.trace import JobSpec, TaskSpec


def job(job_id, submission, count, mem_gb, duration, penalty=3.0):
    task = TaskSpec.sim_penalty(int(round(mem_gb * GB / (100 * MB))) * 100 * MB, duration, penalty)
    return JobSpec(job_id, submission, (task,) * count)


def small_config(**kw):
    args = dict(node_count=1, record_node_samples=False)
    args.update(kw)
    return SimConfig(**args)


def arrived(config, trace, occupy=()):
    """A simulation with every job arrived and no pass run.

    ``occupy`` is a list of (node_id, job_id) pairs; each places the job's
    next task regularly, to shape free capacity before a decision.
    """
    sim = Simulation(config, trace)
    for j in trace:
        sim.jobs[j.job_id].arrived = True
        sim._active[sim.jobs[j.job_id].index] = 1
        sim.queue.update(sim.jobs[j.job_id])
    for node_id, job_id in occupy:
        state = sim.jobs[job_id]
        sim.allocate(sim.nodes[node_id], state, state.tasks[state.next_task].ideal_memory, "regular")
    return sim
