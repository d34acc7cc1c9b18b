"""Parameter sweeps: generate a trace, run every scheduler on it, compare.

Each (configuration, seed) point is independent, so points can run in a
process pool. Records are sorted by (configuration, seed) before they are
aggregated, which makes the output independent of completion order.
"""

from __future__ import annotations

import csv
import itertools
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .engine import SimConfig, run_simulation
from .metrics import avg_job_runtime, makespan, write_cdf
from .perturb import PerturbSpec, apply
from .trace import TraceGenSpec, generate_trace, scale_trace

# max values swept with the min held fixed
UNIFORM_RANGES = {
    "tasks_per_job_range": (1, (200, 400)),
    "mem_per_task_range": (1.0, (2.0, 10.0)),
    "duration_range": (1.0, (200.0, 500.0)),
}
EXPONENTIAL_RANGES = {
    "tasks_per_job_range": (1, (20, 220)),
    "mem_per_task_range": (1.0, (2.0, 10.0)),
    "duration_range": (50.0, (100.0, 500.0)),
}


@dataclass(frozen=True)
class SweepPoint:
    config_id: int
    trace: TraceGenSpec
    seed: int
    schedulers: tuple[str, ...] = ("yarn", "yarn-me")
    perturb: PerturbSpec | None = None
    # replicate the generated trace this many times (weak scaling)
    scale: int = 1
    sim: dict = field(default_factory=dict)


def grid(distribution: str = "uniform", points: int | Sequence[int] = 6, max_penalty: float = 3.0,
         job_count: int = 100) -> list[TraceGenSpec]:
    """Trace specs over the sweep table, ``points`` evenly spaced maxima per parameter."""
    ranges = UNIFORM_RANGES if distribution == "uniform" else EXPONENTIAL_RANGES
    if isinstance(points, int):
        points = (points,) * len(ranges)
    axes = []
    for (name, (lo, (a, b))), n in zip(ranges.items(), points):
        values = np.linspace(a, b, n)
        if name == "tasks_per_job_range":
            values = np.round(values).astype(int)
        axes.append([(name, (lo, v.item())) for v in values])
    specs = []
    for combo in itertools.product(*axes):
        specs.append(TraceGenSpec(job_count=job_count, distribution=distribution, max_penalty=max_penalty,
                                  **dict(combo)))
    return specs


def run_point(point: SweepPoint) -> dict:
    trace = generate_trace(replace(point.trace, seed=point.seed))
    if point.scale > 1:
        trace = scale_trace(trace, point.scale)
    cfg = SimConfig(record_node_samples=False, **point.sim)
    truth = None
    if point.perturb is not None:
        trace, truth = apply(trace, point.perturb, memory_cap=cfg.mem_per_node)
    rec = {"config_id": point.config_id, "seed": point.seed, "scale": point.scale,
           **{k: v for k, v in asdict(point.trace).items() if k != "seed"}}
    if point.perturb is not None:
        rec["perturb"] = f"{point.perturb.target}:{point.perturb.bounds[0]}:{point.perturb.bounds[1]}"
    for name in point.schedulers:
        result = run_simulation(replace(cfg, scheduler=name), trace, truth)
        rec[f"jrt_{name}"] = avg_job_runtime(result)
        rec[f"makespan_{name}"] = makespan(result)
    base = point.schedulers[0]
    for name in point.schedulers[1:]:
        rec[f"ratio_{name}"] = rec[f"jrt_{name}"] / rec[f"jrt_{base}"]
        rec[f"makespan_ratio_{name}"] = rec[f"makespan_{name}"] / rec[f"makespan_{base}"]
    return rec


def points_for(specs: Sequence[TraceGenSpec], seeds: Sequence[int], **kw) -> list[SweepPoint]:
    return [SweepPoint(i, spec, seed, **kw) for i, spec in enumerate(specs) for seed in seeds]


def run_points(points: Sequence[SweepPoint], workers: int = 1, progress=None) -> list[dict]:
    records = []
    if workers <= 1:
        for p in points:
            records.append(run_point(p))
            if progress:
                progress(len(records), len(points))
    else:
        with ProcessPoolExecutor(workers) as pool:
            for rec in pool.map(run_point, points, chunksize=1):
                records.append(rec)
                if progress:
                    progress(len(records), len(points))
    records.sort(key=lambda r: (r["config_id"], r["seed"], r["scale"]))
    return records


def per_config(records: Sequence[dict], key: str) -> dict[int, dict]:
    """Median and maximum of ``key`` across seeds, per configuration."""
    by: dict[int, list[float]] = {}
    for r in records:
        by.setdefault(r["config_id"], []).append(r[key])
    return {c: {"median": float(np.median(v)), "max": float(np.max(v)), "n": len(v)} for c, v in sorted(by.items())}


def write_records(records: Sequence[dict], out_dir, key: str = "ratio_yarn-me") -> dict:
    """records.csv, per_config.csv and the median/max CDF files; returns a summary."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names: list[str] = []
    for r in records:
        names.extend(k for k in r if k not in names)
    with open(out / "records.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=names)
        w.writeheader()
        for r in records:
            w.writerow({k: (json.dumps(v) if isinstance(v, (list, tuple)) else v) for k, v in r.items()})
    agg = per_config(records, key)
    with open(out / "per_config.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["config_id", "median", "max", "seeds"])
        for c, a in agg.items():
            w.writerow([c, repr(a["median"]), repr(a["max"]), a["n"]])
    medians = [a["median"] for a in agg.values()]
    write_cdf(medians, out / "cdf_median.csv")
    write_cdf([a["max"] for a in agg.values()], out / "cdf_max.csv")
    summary = {
        "key": key,
        "records": len(records),
        "configurations": len(agg),
        "median_of_medians": float(np.median(medians)),
        "worst_median": float(np.max(medians)),
        "fraction_at_most_0.7": float(np.mean(np.array(medians) <= 0.7)),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary
