"""Simulator of memory-elastic cluster scheduling."""

__version__ = "0.1.0"

from .engine import SimConfig, Simulation, run_simulation
from .metrics import SimResult, avg_job_runtime, avg_memory_utilization, compare, makespan
from .models import (
    GB,
    GRANULARITY,
    MB,
    MapperStepModel,
    ReducerSpillModel,
    SimPenaltyModel,
    TrainingRun,
    fit_reducer_model,
    min_memory_for_best_runtime,
    predict_runtime,
    predict_runtime_step,
    sim_penalty_runtime,
    spilled_bytes,
)
from .trace import JobSpec, TaskSpec, TraceGenSpec, generate_trace, read_trace, write_trace
