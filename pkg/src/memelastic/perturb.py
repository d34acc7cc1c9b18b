"""Mis-estimation injection.

``apply`` returns two traces of identical shape: what the scheduler is told
and what the tasks actually do. Durations are perturbed on the ground-truth
side, one factor per task, because the scheduler plans with trace durations.
Ideal memory and penalty are perturbed on the scheduler's side, one factor
per job. A factor ``f`` is drawn uniformly from ``(lo, hi]`` (or from
``[-hi, -lo)`` when ``sign`` is ``neg``) and the value is multiplied by
``1 + f``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .models import GRANULARITY, MapperStepModel, SimPenaltyModel, round_up
from .trace import JobSpec, TaskSpec

TARGETS = ("duration", "memory", "penalty")


class PerturbError(ValueError):
    pass


@dataclass(frozen=True)
class PerturbSpec:
    target: str
    interval: tuple[float, float]
    sign: str = "pos"
    seed: int = 0

    def __post_init__(self):
        if self.target not in TARGETS:
            raise PerturbError(f"unknown target {self.target!r}; choose from {TARGETS}")
        if self.sign not in ("pos", "neg"):
            raise PerturbError("sign must be 'pos' or 'neg'")
        lo, hi = self.interval
        if lo > hi:
            raise PerturbError(f"empty interval ({lo}, {hi}]")

    @property
    def scope(self) -> str:
        return "task" if self.target == "duration" else "job"

    @property
    def bounds(self) -> tuple[float, float]:
        lo, hi = self.interval
        return (lo, hi) if self.sign == "pos" else (-hi, -lo)

    def draw(self, rng: np.random.Generator) -> float:
        lo, hi = self.interval
        # hi - U[0, width) lies in (lo, hi]
        f = hi - rng.uniform(0.0, hi - lo) if hi > lo else hi
        return f if self.sign == "pos" else -f


def _scale_duration(task: TaskSpec, factor: float) -> TaskSpec:
    d = task.ideal_duration * factor
    if not d > 0:
        raise PerturbError(f"perturbed duration {d} is not positive")
    if isinstance(task.model, MapperStepModel):
        return task.with_model(ideal_duration=d, undersized_runtime=task.model.undersized_runtime * factor)
    return task.with_model(ideal_duration=d)


def _scale_memory(task: TaskSpec, factor: float, cap: int | None) -> TaskSpec:
    m = task.ideal_memory * factor
    if not m > 0:
        raise PerturbError(f"perturbed memory {m} is not positive")
    mem = max(GRANULARITY, round_up(m, GRANULARITY))
    if cap is not None:
        mem = min(mem, cap)
    return task.with_model(ideal_memory=mem)


def _scale_penalty(task: TaskSpec, factor: float) -> TaskSpec:
    if not isinstance(task.model, SimPenaltyModel):
        raise PerturbError("penalty perturbation needs the simulator penalty model")
    p = task.model.max_penalty * factor
    if p < 1:
        raise PerturbError(f"perturbed penalty {p:.3f} is below 1")
    return task.with_model(max_penalty=p)


def apply(trace: Sequence[JobSpec], spec: PerturbSpec,
          memory_cap: int | None = None) -> tuple[list[JobSpec], list[JobSpec]]:
    """(scheduler view, ground truth); deterministic in ``spec.seed``.

    ``memory_cap`` bounds perturbed ideal memory, normally the node size, so
    that an over-estimate cannot make a task unplaceable.
    """
    rng = np.random.default_rng(spec.seed)
    view, truth = [], []
    for job in trace:
        if spec.target == "duration":
            tasks = []
            cache: dict[tuple[TaskSpec, float], TaskSpec] = {}
            for task in job.tasks:
                factor = 1.0 + spec.draw(rng)
                key = (task, factor)
                if key not in cache:
                    cache[key] = _scale_duration(task, factor)
                tasks.append(cache[key])
            view.append(job)
            truth.append(replace(job, tasks=tuple(tasks)))
            continue
        factor = 1.0 + spec.draw(rng)
        scaled: dict[TaskSpec, TaskSpec] = {}
        for task in job.tasks:
            if task not in scaled:
                if spec.target == "memory":
                    scaled[task] = _scale_memory(task, factor, memory_cap)
                else:
                    scaled[task] = _scale_penalty(task, factor)
        view.append(replace(job, tasks=tuple(scaled[t] for t in job.tasks)))
        truth.append(job)
    return view, truth
