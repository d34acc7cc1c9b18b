import csv
import json
import subprocess
import sys

import pytest

from memelastic.cli import main
from memelastic.trace import read_trace


@pytest.fixture
def trace_file(tmp_path):
    path = tmp_path / "trace.jsonl"
    assert main(["gen-trace", "--jobs", "12", "--tasks", "1:30", "--mem", "1:8", "--dur", "1:60",
                 "--window", "100", "--seed", "3", "--out", str(path)]) == 0
    return path


def test_gen_trace(trace_file):
    jobs = read_trace(trace_file)
    assert len(jobs) == 12
    assert all(1 <= len(j.tasks) <= 30 for j in jobs)


def test_scenario_fig5(capsys):
    assert main(["scenario", "fig5"]) == 0
    out = capsys.readouterr().out
    ratio = float(out.rsplit("ratio", 1)[1])
    assert ratio < 0.3


def test_run_is_byte_identical(tmp_path, trace_file):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["run", "--trace", str(trace_file), "--scheduler", "yarn-me", "--set", "node_count=3",
                     "--out", str(out)]) == 0
        outs.append(out)
    for f in ("jobs.csv", "tasks.csv", "utilization.csv", "node_utilization.csv", "summary.json"):
        assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()
    manifest = json.loads((outs[0] / "manifest.json").read_text())
    assert manifest["config"]["node_count"] == 3
    assert manifest["config"]["scheduler"] == "yarn-me"
    assert manifest["trace_fingerprint"]
    assert "code_version" in manifest


def test_run_with_yaml_config_and_perturbation(tmp_path, trace_file):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("node_count: 2\nscheduler: yarn\nheartbeat_interval: 1.0\n")
    out = tmp_path / "run"
    assert main(["run", "--config", str(cfg), "--trace", str(trace_file), "--out", str(out),
                 "--perturb", "duration", "--interval", "0:0.5", "--perturb-seed", "1"]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["perturb"]["target"] == "duration"


def test_report_recomputes_from_tasks(tmp_path, trace_file, capsys):
    out = tmp_path / "run"
    main(["run", "--trace", str(trace_file), "--set", "node_count=2", "--out", str(out)])
    summary = json.loads((out / "summary.json").read_text())
    capsys.readouterr()
    for metric, key in (("jrt", "avg_job_runtime"), ("makespan", "makespan"), ("util", "avg_memory_utilization")):
        assert main(["report", "--in", str(out), "--metric", metric]) == 0
        rows = list(csv.reader(capsys.readouterr().out.splitlines()))
        assert rows[1][0] == metric
        assert float(rows[1][1]) == pytest.approx(summary[key], rel=1e-12)


def test_sweep_record_count(tmp_path, capsys):
    out = tmp_path / "sweep"
    assert main(["sweep", "--points", "2", "--seeds", "2", "--jobs", "6", "--nodes", "4", "--out", str(out)]) == 0
    assert (out / "manifest.json").exists()
    for sub in ("yarn-me", "meganode"):
        with open(out / sub / "records.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 2 ** 3 * 2
        assert {r["seed"] for r in rows} == {"0", "1"}
        assert all(float(r[f"ratio_{sub}"]) > 0 for r in rows)
        for name in ("per_config.csv", "cdf_median.csv", "cdf_max.csv", "summary.json"):
            assert (out / sub / name).exists()
    capsys.readouterr()
    assert main(["report", "--in", str(out / "yarn-me")]) == 0
    assert len(capsys.readouterr().out.splitlines()) == 1 + len(rows)
    assert main(["report", "--in", str(out / "meganode"), "--metric", "makespan"]) == 0
    assert capsys.readouterr().out.splitlines()[0] == "config_id,seed,makespan_ratio_meganode"


def test_sweep_two_schedulers_writes_flat(tmp_path):
    out = tmp_path / "sweep"
    assert main(["sweep", "--points", "1", "--seeds", "1", "--jobs", "5", "--nodes", "3",
                 "--schedulers", "yarn,yarn-me", "--out", str(out)]) == 0
    assert (out / "records.csv").exists() and (out / "summary.json").exists()


def test_fit(tmp_path, capsys):
    runs = tmp_path / "runs.txt"
    runs.write_text("# memory runtime well\n2000000000 100 1\n500000000 160 0\n")
    assert main(["fit", "--runs", str(runs), "--input-size", "1.4e9"]) == 0
    model = json.loads(capsys.readouterr().out)
    assert model["ideal_runtime"] == 100.0
    # 500 MB leaves a 350 MB buffer: four full buffers (1.4 GB) spill in the extra 60 s
    assert model["disk_rate"] == pytest.approx(1.4e9 / 60)


@pytest.mark.parametrize("argv", [
    ["run", "--trace", "/nonexistent/trace.jsonl", "--out", "x"],
    ["run", "--trace", "{trace}", "--out", "{tmp}/o", "--set", "node_count=0"],
    ["run", "--trace", "{trace}", "--out", "{tmp}/o", "--set", "nonsense"],
    ["run", "--trace", "{trace}", "--out", "{tmp}/o", "--perturb", "duration"],
    ["report", "--in", "{tmp}"],
])
def test_errors_exit_2(argv, tmp_path, trace_file, capsys):
    argv = [a.format(trace=trace_file, tmp=tmp_path) for a in argv]
    assert main(argv) == 2
    assert capsys.readouterr().err.startswith("error:")


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "memelastic", "scenario", "fig5"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "ratio" in proc.stdout
    bad = subprocess.run([sys.executable, "-m", "memelastic", "run"], capture_output=True, text=True)
    assert bad.returncode == 2
