"""
Runtime of an under-sized reducer
=================================

A reducer that gets less memory than it needs keeps its shuffle buffer
smaller and spills whole buffers to disk. This walks through the spill
model: profile one task from two measured runs, print its runtime curve,
and pick the allocation a memory-elastic scheduler would grant.

Run with ``python demos/spill_profile.py``.
"""

from memelastic import GB, MB, TrainingRun, fit_reducer_model, min_memory_for_best_runtime
from memelastic.models import SimPenaltyModel

# Two runs of the same reducer over 3.5 GB of shuffle input: one with all the
# memory it wants, one at roughly half. That is all the profiling we need.
input_size = 3.5e9
well = TrainingRun(memory=5 * GB, runtime=60.0, is_well_sized=True)
under = TrainingRun(memory=2600 * MB, runtime=103.75, is_well_sized=False)
model = fit_reducer_model(well, under, input_size=input_size)

print(f"ideal runtime {model.ideal_runtime:.1f} s at {model.ideal_memory / GB:.1f} GB")
print(f"fitted disk rate {model.disk_rate / MB:.1f} MB/s\n")

# Runtime against memory. The curve is a sawtooth, not a staircase: just
# below the point where one fewer buffer fits, the buffers are at their
# largest and the task spills the most.
print(" memory (GB)   spilled (GB)   runtime (s)")
for mem in range(500 * MB, model.ideal_memory + 1, 300 * MB):
    print(f"{mem / GB:12.1f} {model.spilled_bytes(mem) / GB:14.2f} {model.runtime(mem):13.1f}")

# With a given amount of free memory, the cheapest allocation is not always
# all of it: a smaller grant can spill less.
print()
for free in (1 * GB, 2 * GB, 3 * GB, 4 * GB):
    mem, rt = min_memory_for_best_runtime(model, free)
    print(f"{free / GB:.0f} GB free: grant {mem / GB:.1f} GB, runtime {rt:.1f} s "
          f"(all of it would take {model.runtime(free):.1f} s)")

# The simulator's own workload model is simpler: the runtime grows with the
# number of whole shuffle buffers that fit in the missing memory, up to a
# fixed multiple of the ideal runtime at the memory floor.
sim = SimPenaltyModel(ideal_runtime=100.0, ideal_memory=4 * GB, max_penalty=3.0)
print("\nsimulator task, 4 GB ideal, 3x penalty at the floor:")
for mem in (400 * MB, 1 * GB, 2 * GB, 3 * GB, 4 * GB):
    print(f"  {mem / GB:.1f} GB -> {sim.runtime(mem):.0f} s")
