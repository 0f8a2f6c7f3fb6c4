import json
import subprocess
import sys

import pytest

from coevo.cli import main
from coevo.config import reference_config_path

REF = str(reference_config_path())


def snapshot(mem=(3500.0, 2500.0), gpu=10240.0):
    batches = [{"batch_id": f"b{i}", "mean": [float(i % 3), 0.0], "std": [1.0, 1.0], "count": 20} for i in range(6)]
    jobs = [
        {"job_id": j, "task_id": f"task-{j}", "backbone_family": "r50", "flops_per_block": [100.0] * 4,
         "epochs": 2, "dataset": ds, "mem_model_mb": mem[0], "mem_act_mb": mem[1]}
        for j, ds in (("j1", ["b0", "b1", "b2", "b3"]), ("j2", ["b0", "b1", "b2", "b4"]), ("j3", ["b5"]))
    ]
    return {"jobs": jobs, "batches": batches, "gpu_mem_mb": gpu}


def test_simulate_writes_outputs(tmp_path, capsys):
    assert main(["simulate", "--config", REF, "--mode", "independent", "--seed", "1", "--out", str(tmp_path)]) == 0
    assert {p.name for p in tmp_path.iterdir()} == {"report.json", "timeline.csv", "events.jsonl"}
    assert json.loads((tmp_path / "report.json").read_text())["mode"] == "independent"
    assert "lowest_acc" in capsys.readouterr().out


def test_simulate_twice_is_byte_identical(tmp_path):
    for d in ("a", "b"):
        assert main(["simulate", "--config", REF, "--seed", "7", "--out", str(tmp_path / d)]) == 0
    for name in ("report.json", "timeline.csv", "events.jsonl"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_trace_replay_is_byte_identical(tmp_path):
    trace = tmp_path / "t.jsonl"
    assert main(["gen-trace", "--config", REF, "--seed", "11", "--out", str(trace)]) == 0
    assert main(["simulate", "--config", REF, "--seed", "11", "--out", str(tmp_path / "live")]) == 0
    assert main(["simulate", "--config", REF, "--trace", str(trace), "--out", str(tmp_path / "replay")]) == 0
    for name in ("report.json", "timeline.csv", "events.jsonl"):
        assert (tmp_path / "live" / name).read_bytes() == (tmp_path / "replay" / name).read_bytes()


def test_config_errors_exit_2(tmp_path, capsys):
    assert main(["simulate", "--config", str(tmp_path / "none.json"), "--out", str(tmp_path)]) == 2
    bad = tmp_path / "bad.json"
    cfg = json.loads(open(REF).read())
    cfg["gpu_count"] = 2
    bad.write_text(json.dumps(cfg))
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert "gpu_count" in capsys.readouterr().err


def test_runtime_error_exit_1(tmp_path):
    blocker = tmp_path / "f"
    blocker.write_text("")
    assert main(["gen-trace", "--config", REF, "--out", str(blocker / "t.jsonl")]) == 1


def test_plan_fuses_overlapping_jobs(tmp_path):
    snap = tmp_path / "s.json"
    snap.write_text(json.dumps(snapshot()))
    out = tmp_path / "p.json"
    assert main(["plan", "--snapshot", str(snap), "--out", str(out)]) == 0
    groups = json.loads(out.read_text())["groups"]
    assert sorted(tuple(g["jobs"]) for g in groups) == [("j1", "j2"), ("j3",)]
    for g in groups:
        assert g["mem_mb"] <= 10240.0
        assert sorted(g["order"]) == sorted(set(g["order"]))


def test_plan_infeasible_singleton_exit_2(tmp_path):
    snap = tmp_path / "s.json"
    snap.write_text(json.dumps(snapshot(mem=(9000.0, 3000.0))))
    assert main(["plan", "--snapshot", str(snap), "--out", str(tmp_path / "p.json")]) == 2


def test_plan_unknown_batch_exit_2(tmp_path):
    s = snapshot()
    s["jobs"][0]["dataset"].append("ghost")
    snap = tmp_path / "s.json"
    snap.write_text(json.dumps(s))
    assert main(["plan", "--snapshot", str(snap), "--out", str(tmp_path / "p.json")]) == 2


def test_sweep(tmp_path):
    assert main(["sweep", "--config", REF, "--seeds", "1..2", "--out", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "sweep.json").read_text())
    assert [r["seed"] for r in summary["rows"]] == [1, 2]
    lines = (tmp_path / "sweep.csv").read_text().splitlines()
    assert lines[0] == "seed,coevolve_lowest,independent_lowest,margin" and len(lines) == 3


def test_bad_seed_range_is_usage_error():
    with pytest.raises(SystemExit) as e:
        main(["sweep", "--config", REF, "--seeds", "5..1", "--out", "x"])
    assert e.value.code == 2


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "coevo", "gen-trace", "--config", REF, "--out", str(tmp_path / "t.jsonl")],
                       capture_output=True, text=True)
    assert r.returncode == 0 and (tmp_path / "t.jsonl").exists()
