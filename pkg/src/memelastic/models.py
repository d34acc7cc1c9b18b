"""Memory-elasticity runtime models.

Each model maps a memory allocation (bytes) to a predicted task runtime
(seconds). Three families are supported:

* ``MapperStepModel``: under-sized mappers pay one fixed extra merge phase,
  so runtime is a step function of memory.
* ``ReducerSpillModel``: under-sized reducers pay for every byte they spill,
  at a constant disk rate. Spills happen one full shuffle buffer at a time,
  which gives the sawtooth shape. ``expansion_factor`` covers frameworks that
  deserialize data into the buffer (Spark) and ``local_input_fraction`` covers
  frameworks that read node-local map output straight from disk (Tez).
* ``SimPenaltyModel``: the simulator's penalty model, a synthetic spill model
  calibrated so that the 10% memory floor costs exactly ``max_penalty`` times
  the ideal runtime.

All models are immutable and hashable, so results of the grid search in
:func:`min_memory_for_best_runtime` are memoised per model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Union

MB = 10**6
GB = 10**9
GRANULARITY = 100 * MB
DEFAULT_SHUFFLE_FRACTION = 0.70
DEFAULT_MIN_MEMORY_FRACTION = 0.10


class ModelError(ValueError):
    """Base class for model construction and evaluation errors."""


class InvalidArgumentError(ModelError):
    pass


class UnfittableError(ModelError):
    pass


class BelowFloorError(ModelError):
    pass


class NoFeasibleAllocationError(ModelError):
    pass


def round_up(value: float, granularity: int = GRANULARITY) -> int:
    """Smallest multiple of ``granularity`` that is >= ``value``."""
    units = math.ceil(value / granularity)
    # guard against float noise such as 0.1 * 3e9 / 1e8 = 3.0000000000000004
    if (units - 1) * granularity >= value:
        units -= 1
    return int(units) * granularity


def round_down(value: float, granularity: int = GRANULARITY) -> int:
    units = math.floor(value / granularity)
    if (units + 1) * granularity <= value:
        units += 1
    return int(units) * granularity


def _check_memory(memory: float) -> None:
    if not memory > 0:
        raise InvalidArgumentError(f"memory must be positive, got {memory!r}")


@dataclass(frozen=True)
class TrainingRun:
    memory: int
    runtime: float
    is_well_sized: bool

    def __post_init__(self):
        if not self.memory > 0 or not self.runtime > 0:
            raise InvalidArgumentError("training run needs positive memory and runtime")


@dataclass(frozen=True)
class ReducerSpillModel:
    ideal_runtime: float
    ideal_memory: int
    input_size: float
    disk_rate: float
    shuffle_fraction: float = DEFAULT_SHUFFLE_FRACTION
    expansion_factor: float = 1.0
    local_input_fraction: float = 0.0

    def __post_init__(self):
        if not (self.ideal_runtime > 0 and self.ideal_memory > 0):
            raise InvalidArgumentError("ideal_runtime and ideal_memory must be positive")
        if not self.input_size > 0:
            raise InvalidArgumentError("input_size must be positive (no shuffle data, no profile)")
        if not self.disk_rate > 0:
            raise InvalidArgumentError("disk_rate must be positive")
        if not 0 < self.shuffle_fraction <= 1:
            raise InvalidArgumentError("shuffle_fraction must lie in (0, 1]")
        if self.expansion_factor < 1:
            raise InvalidArgumentError("expansion_factor must be >= 1")
        if not 0 <= self.local_input_fraction < 1:
            raise InvalidArgumentError("local_input_fraction must lie in [0, 1)")

    @property
    def effective_input(self) -> float:
        """Bytes that pass through the shuffle buffer."""
        return self.input_size * self.expansion_factor * (1.0 - self.local_input_fraction)

    def buffer_size(self, memory: float) -> float:
        return self.shuffle_fraction * memory

    def spilled_bytes(self, memory: float) -> float:
        _check_memory(memory)
        if memory >= self.ideal_memory:
            return 0.0
        buf = self.buffer_size(memory)
        return math.floor(self.effective_input / buf) * buf

    def runtime(self, memory: float) -> float:
        return self.ideal_runtime + self.spilled_bytes(memory) / self.disk_rate


@dataclass(frozen=True)
class MapperStepModel:
    ideal_runtime: float
    ideal_memory: int
    undersized_runtime: float

    def __post_init__(self):
        if not (self.ideal_runtime > 0 and self.ideal_memory > 0):
            raise InvalidArgumentError("ideal_runtime and ideal_memory must be positive")
        if self.undersized_runtime < self.ideal_runtime:
            raise InvalidArgumentError("undersized_runtime must be >= ideal_runtime")

    def runtime(self, memory: float) -> float:
        _check_memory(memory)
        return self.ideal_runtime if memory >= self.ideal_memory else self.undersized_runtime


@dataclass(frozen=True)
class SimPenaltyModel:
    ideal_runtime: float
    ideal_memory: int
    max_penalty: float = 3.0
    min_memory_fraction: float = DEFAULT_MIN_MEMORY_FRACTION

    def __post_init__(self):
        if not (self.ideal_runtime > 0 and self.ideal_memory > 0):
            raise InvalidArgumentError("ideal_runtime and ideal_memory must be positive")
        if self.max_penalty < 1:
            raise InvalidArgumentError("max_penalty must be >= 1")
        if not 0 < self.min_memory_fraction <= 1:
            raise InvalidArgumentError("min_memory_fraction must lie in (0, 1]")

    @property
    def min_memory(self) -> float:
        return self.min_memory_fraction * self.ideal_memory

    def as_spill_model(self) -> ReducerSpillModel:
        """The calibrated reducer model this penalty curve is drawn from.

        The input exactly fills the buffer at ideal memory, and the disk rate is
        chosen so that spilling the whole input costs ``max_penalty - 1`` ideal
        runtimes. The buffer fraction cancels out of the curve, so 1.0 keeps
        the floor division exact on integer byte counts.
        """
        if self.max_penalty == 1:
            rate = math.inf
        else:
            rate = self.ideal_memory / ((self.max_penalty - 1.0) * self.ideal_runtime)
        return ReducerSpillModel(
            ideal_runtime=self.ideal_runtime,
            ideal_memory=self.ideal_memory,
            input_size=float(self.ideal_memory),
            disk_rate=rate,
            shuffle_fraction=1.0,
        )

    def runtime(self, memory: float) -> float:
        _check_memory(memory)
        if memory < self.min_memory * (1 - 1e-12):
            raise BelowFloorError(
                f"{memory} bytes is below the {self.min_memory_fraction:.0%} floor "
                f"of {self.ideal_memory} bytes"
            )
        if memory >= self.ideal_memory:
            return self.ideal_runtime
        spilled = math.floor(self.ideal_memory / memory) * memory
        if self.max_penalty == 1:
            return self.ideal_runtime
        return self.ideal_runtime + spilled * ((self.max_penalty - 1.0) * self.ideal_runtime) / self.ideal_memory


ElasticityModel = Union[ReducerSpillModel, MapperStepModel, SimPenaltyModel]


def spilled_bytes(model: ReducerSpillModel, memory: float) -> float:
    return model.spilled_bytes(memory)


def predict_runtime(model: ReducerSpillModel, memory: float) -> float:
    return model.runtime(memory)


def predict_runtime_step(model: MapperStepModel, memory: float) -> float:
    return model.runtime(memory)


def sim_penalty_runtime(model: SimPenaltyModel, memory: float) -> float:
    return model.runtime(memory)


def fit_reducer_model(
    well_sized: TrainingRun,
    under_sized: TrainingRun,
    input_size: float,
    shuffle_fraction: float = DEFAULT_SHUFFLE_FRACTION,
    expansion_factor: float = 1.0,
    local_input_fraction: float = 0.0,
    ideal_memory: int | None = None,
) -> ReducerSpillModel:
    """Fit a reducer spill model from one well-sized and one under-sized run.

    The well-sized run gives the ideal runtime; the extra time of the
    under-sized run, divided into the bytes it must have spilled, gives the
    disk rate. ``ideal_memory`` defaults to the well-sized run's memory.
    """
    if not well_sized.is_well_sized or under_sized.is_well_sized:
        raise InvalidArgumentError("need one well-sized and one under-sized run")
    ideal = well_sized.memory if ideal_memory is None else ideal_memory
    if under_sized.memory >= ideal:
        raise InvalidArgumentError("under-sized run must use less than the ideal memory")
    if under_sized.runtime <= well_sized.runtime:
        raise UnfittableError("under-sized run is not slower; no measurable spill penalty")
    # disk_rate is a placeholder until the spill volume is known
    probe = ReducerSpillModel(
        ideal_runtime=well_sized.runtime,
        ideal_memory=ideal,
        input_size=input_size,
        disk_rate=1.0,
        shuffle_fraction=shuffle_fraction,
        expansion_factor=expansion_factor,
        local_input_fraction=local_input_fraction,
    )
    spilled = probe.spilled_bytes(under_sized.memory)
    if spilled == 0:
        raise UnfittableError("no bytes spilled at the under-sized memory")
    rate = spilled / (under_sized.runtime - well_sized.runtime)
    return ReducerSpillModel(
        ideal_runtime=well_sized.runtime,
        ideal_memory=ideal,
        input_size=input_size,
        disk_rate=rate,
        shuffle_fraction=shuffle_fraction,
        expansion_factor=expansion_factor,
        local_input_fraction=local_input_fraction,
    )


def floor_memory(
    model: ElasticityModel,
    granularity: int = GRANULARITY,
    min_memory_fraction: float | None = None,
) -> int:
    """Smallest grantable allocation for ``model`` on the memory grid."""
    if min_memory_fraction is None:
        min_memory_fraction = getattr(model, "min_memory_fraction", DEFAULT_MIN_MEMORY_FRACTION)
    return max(granularity, round_up(min_memory_fraction * model.ideal_memory, granularity))


def min_memory_for_best_runtime(
    model: ElasticityModel,
    available_memory: int,
    granularity: int = GRANULARITY,
    min_memory_fraction: float | None = None,
) -> tuple[int, float]:
    """Smallest allocation on the grid reaching the lowest runtime that fits.

    Scans ``floor, floor + granularity, ...`` up to
    ``min(available_memory, ideal_memory)``; the ideal memory itself is a
    candidate whenever it fits even if it lies off the grid.
    """
    return _best_runtime(model, int(available_memory), granularity, min_memory_fraction)


@lru_cache(maxsize=65536)
def _best_runtime(model, available, granularity, min_memory_fraction):
    lo = floor_memory(model, granularity, min_memory_fraction)
    if available < lo and available < model.ideal_memory:
        raise NoFeasibleAllocationError(
            f"{available} bytes available, floor is {lo} bytes"
        )
    top = min(available, model.ideal_memory)
    candidates = list(range(lo, top + 1, granularity))
    if available >= model.ideal_memory and (not candidates or candidates[-1] != model.ideal_memory):
        candidates.append(model.ideal_memory)
    best_mem, best_rt = 0, math.inf
    for mem in candidates:
        rt = model.runtime(mem)
        if rt < best_rt:
            best_mem, best_rt = mem, rt
    return best_mem, best_rt
