"""Command-line entry point: ``python -m memelastic <command> ...``.

Commands: gen-trace, fit, run, sweep, report, scenario. Every command that
writes files writes them under its output path only, and output
directories get a ``manifest.json`` with the arguments, the effective
config, seeds and a code-version stamp.
"""

from __future__ import annotations

import argparse
import csv
import json
import subprocess
import sys
from dataclasses import asdict
from pathlib import Path

import yaml

from . import __version__
from .engine import SimConfig, SimulationError, run_simulation
from .metrics import (
    MetricsError,
    SimResult,
    avg_job_runtime,
    avg_memory_utilization,
    jobs_from_tasks,
    makespan,
    read_tasks_csv,
    summary,
    write_result,
)
from .models import ModelError, TrainingRun, fit_reducer_model
from .perturb import PerturbError, PerturbSpec, apply
from .scenarios import run_fig5
from .sweep import grid, points_for, run_points, write_records
from .trace import TraceError, TraceGenSpec, generate_trace, read_trace, trace_fingerprint, write_trace


class CliError(Exception):
    pass


def _range(text: str) -> tuple[float, float]:
    try:
        lo, hi = text.split(":")
        return float(lo), float(hi)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected MIN:MAX, got {text!r}") from None


def _code_version() -> str:
    try:
        rev = subprocess.run(["git", "rev-parse", "--short", "HEAD"], capture_output=True, text=True,
                             cwd=Path(__file__).parent, timeout=5)
        if rev.returncode == 0:
            return f"{__version__}+g{rev.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def write_manifest(out_dir: Path, args: argparse.Namespace, **extra) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    argv = {k: v for k, v in vars(args).items() if k != "func"}
    manifest = {"code_version": _code_version(), "arguments": argv, **extra}
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")


def load_config(path: str | None, overrides: list[str] | None = None) -> SimConfig:
    """Flat key/value YAML (or JSON) file, then ``key=value`` overrides."""
    data: dict = {}
    if path:
        p = Path(path)
        if not p.exists():
            raise CliError(f"config file not found: {path}")
        loaded = yaml.safe_load(p.read_text()) or {}
        if not isinstance(loaded, dict) or any(isinstance(v, (dict, list)) for v in loaded.values()):
            raise CliError("config must be a flat key/value mapping")
        data.update(loaded)
    for item in overrides or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise CliError(f"override {item!r} is not key=value")
        data[key.strip()] = yaml.safe_load(value)
    for key in ("mem_per_node", "granularity"):
        if key in data:
            data[key] = int(data[key])
    if "disk_budget_per_node" in data:
        data["disk_budget_per_node"] = float(data["disk_budget_per_node"])
    try:
        return SimConfig.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise CliError(f"invalid config: {exc}") from None


def _perturb_spec(args) -> PerturbSpec | None:
    if not getattr(args, "perturb", None):
        return None
    if args.interval is None:
        raise CliError("--perturb needs --interval LO:HI")
    return PerturbSpec(args.perturb, args.interval, args.sign, args.perturb_seed)


# -- commands ------------------------------------------------------------------
def cmd_gen_trace(args) -> int:
    dist = {"exp": "exponential"}.get(args.dist, args.dist)
    tasks = (int(args.tasks[0]), int(args.tasks[1]))
    spec = TraceGenSpec(job_count=args.jobs, distribution=dist, tasks_per_job_range=tasks,
                        mem_per_task_range=args.mem, duration_range=args.dur, arrival_window=args.window,
                        max_penalty=args.penalty, seed=args.seed)
    jobs = generate_trace(spec)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_trace(jobs, out)
    print(f"wrote {len(jobs)} jobs to {out} (fingerprint {trace_fingerprint(jobs)})")
    return 0


def read_measurements(path) -> tuple[TrainingRun, TrainingRun]:
    runs = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.replace(",", " ").split()
        if len(parts) != 3:
            raise CliError(f"expected 'memory_bytes runtime_seconds well_sized', got {line!r}")
        flag = parts[2].lower()
        if flag not in ("1", "0", "true", "false", "yes", "no"):
            raise CliError(f"bad well_sized flag {parts[2]!r}")
        runs.append(TrainingRun(int(float(parts[0])), float(parts[1]), flag in ("1", "true", "yes")))
    well = [r for r in runs if r.is_well_sized]
    under = [r for r in runs if not r.is_well_sized]
    if len(runs) != 2 or len(well) != 1:
        raise CliError("need exactly one well-sized and one under-sized run")
    return well[0], under[0]


def cmd_fit(args) -> int:
    well, under = read_measurements(args.runs)
    model = fit_reducer_model(well, under, args.input_size, args.shuffle_fraction, args.expansion_factor,
                              args.local_input_fraction)
    print(json.dumps(asdict(model), indent=2))
    return 0


def cmd_run(args) -> int:
    overrides = list(args.set or [])
    if args.scheduler:
        overrides.append(f"scheduler={args.scheduler}")
    cfg = load_config(args.config, overrides)
    trace = read_trace(args.trace)
    truth = None
    spec = _perturb_spec(args)
    if spec is not None:
        trace, truth = apply(trace, spec, memory_cap=cfg.mem_per_node)
    result = run_simulation(cfg, trace, truth)
    out = Path(args.out)
    write_result(result, out)
    write_manifest(out, args, config=cfg.to_dict(), seed=cfg.seed, trace_fingerprint=result.trace_fingerprint,
                   perturb=asdict(spec) if spec else None)
    s = summary(result)
    print(f"{s['scheduler']}: {s['jobs']} jobs, avg job runtime {s['avg_job_runtime']:.3f} s, "
          f"makespan {s['makespan']:.3f} s")
    return 0


def cmd_sweep(args) -> int:
    dist = {"exp": "exponential"}.get(args.dist, args.dist)
    specs = grid(dist, args.points, args.penalty, args.jobs)
    seeds = list(range(args.seed, args.seed + args.seeds))
    sim = {"node_count": args.nodes}
    schedulers = tuple(args.schedulers.split(","))
    points = points_for(specs, seeds, schedulers=schedulers, perturb=_perturb_spec(args), sim=sim)

    def progress(done, total):
        if args.verbose:
            print(f"\r{done}/{total}", end="", file=sys.stderr, flush=True)

    records = run_points(points, args.workers, progress)
    if args.verbose:
        print(file=sys.stderr)
    out = Path(args.out)
    summaries = {}
    for name in schedulers[1:]:
        sub = out if len(schedulers) == 2 else out / name
        summaries[name] = write_records(records, sub, key=f"ratio_{name}")
    write_manifest(out, args, seeds=seeds, configurations=[asdict(s) for s in specs], sim=sim)
    for name, s in summaries.items():
        print(f"{name}/{schedulers[0]}: {s['records']} records over {s['configurations']} configurations, "
              f"median of medians {s['median_of_medians']:.3f}, worst median {s['worst_median']:.3f}")
    return 0


def cmd_report(args) -> int:
    src = Path(args.input)
    w = csv.writer(sys.stdout)
    if (src / "records.csv").exists():
        key = "ratio_yarn-me"
        if (src / "summary.json").exists():
            key = json.loads((src / "summary.json").read_text()).get("key", key)
        col = {"jrt": key, "makespan": f"makespan_{key}"}.get(args.metric)
        if col is None:
            raise CliError("sweep directories report jrt or makespan ratios")
        with open(src / "records.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        w.writerow(["config_id", "seed", col])
        for r in rows:
            w.writerow([r["config_id"], r["seed"], r[col]])
        return 0
    tasks_path = src / "tasks.csv"
    if not tasks_path.exists():
        raise CliError(f"no tasks.csv or records.csv in {src}")
    tasks = read_tasks_csv(tasks_path)
    jobs = jobs_from_tasks(tasks)
    capacity = None
    manifest = src / "manifest.json"
    if manifest.exists():
        cfg = json.loads(manifest.read_text()).get("config") or {}
        if cfg:
            capacity = cfg["node_count"] * cfg["mem_per_node"]
    result = SimResult("", {}, "", jobs, tasks, capacity or 0)
    if args.metric == "jrt":
        value = avg_job_runtime(result)
    elif args.metric == "makespan":
        value = makespan(result)
    else:
        if not capacity:
            raise CliError("utilization needs the run's manifest.json for cluster capacity")
        value = avg_memory_utilization(result)
    w.writerow(["metric", "value"])
    w.writerow([args.metric, repr(value)])
    return 0


def cmd_scenario(args) -> int:
    outcome = run_fig5()
    if args.out:
        out = Path(args.out)
        for name, result in outcome["results"].items():
            write_result(result, out / name)
        write_manifest(out, args, config={k: r.config for k, r in outcome["results"].items()})
    rt = outcome["job_runtime"]
    print(f"fig5: job runtime yarn {rt['yarn']:.1f} s, yarn-me {rt['yarn-me']:.1f} s, "
          f"ratio {outcome['ratio']:.3f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="memelastic", description="Memory-elastic cluster scheduling simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-trace", help="generate a synthetic trace")
    p.add_argument("--jobs", type=int, default=100)
    p.add_argument("--dist", choices=["uniform", "exp", "exponential"], default="uniform")
    p.add_argument("--tasks", type=_range, default=(1, 300), metavar="MIN:MAX")
    p.add_argument("--mem", type=_range, default=(1.0, 6.0), metavar="MIN:MAX", help="GB")
    p.add_argument("--dur", type=_range, default=(1.0, 350.0), metavar="MIN:MAX", help="seconds")
    p.add_argument("--window", type=float, default=1000.0, help="arrival window, seconds")
    p.add_argument("--penalty", type=float, default=3.0, help="runtime multiple at the memory floor")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_trace)

    p = sub.add_parser("fit", help="fit a reducer spill model from two measured runs")
    p.add_argument("--runs", required=True, help="two lines: memory_bytes runtime_seconds well_sized")
    p.add_argument("--input-size", type=float, required=True, help="reducer input, bytes")
    p.add_argument("--shuffle-fraction", type=float, default=0.70)
    p.add_argument("--expansion-factor", type=float, default=1.0)
    p.add_argument("--local-input-fraction", type=float, default=0.0)
    p.set_defaults(func=cmd_fit)

    def perturb_flags(p):
        p.add_argument("--perturb", choices=["duration", "memory", "penalty"])
        p.add_argument("--interval", type=_range, metavar="LO:HI")
        p.add_argument("--sign", choices=["pos", "neg"], default="pos")
        p.add_argument("--perturb-seed", type=int, default=0)

    p = sub.add_parser("run", help="simulate one trace")
    p.add_argument("--config", help="flat key/value YAML or JSON file of simulator settings")
    p.add_argument("--trace", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--scheduler", choices=["yarn", "yarn-me", "meganode"])
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config value")
    perturb_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="generate, run and compare over the parameter grid")
    p.add_argument("--dist", choices=["uniform", "exp", "exponential"], default="uniform")
    p.add_argument("--points", type=int, default=6, help="maxima per swept parameter")
    p.add_argument("--seeds", type=int, default=3)
    p.add_argument("--seed", type=int, default=0, help="first seed")
    p.add_argument("--penalty", type=float, default=3.0)
    p.add_argument("--jobs", type=int, default=100)
    p.add_argument("--nodes", type=int, default=100)
    p.add_argument("--schedulers", default="yarn,yarn-me,meganode",
                   help="baseline first, comma separated; with more than two, one output subdirectory each")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.add_argument("-v", "--verbose", action="store_true")
    perturb_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="recompute a metric from an output directory")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--metric", choices=["jrt", "makespan", "util"], default="jrt")
    p.add_argument("--format", choices=["csv"], default="csv")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("scenario", help="built-in scenarios")
    p.add_argument("name", choices=["fig5"])
    p.add_argument("--out")
    p.set_defaults(func=cmd_scenario)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, TraceError, ModelError, PerturbError, SimulationError, MetricsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc.filename}: no such file", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
