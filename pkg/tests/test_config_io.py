import csv
import io
import json

import pytest

from coevo.config import (
    ConfigNotFoundError,
    ConfigSyntaxError,
    SchemaError,
    UnknownFieldError,
    canonical_json,
    config_from_dict,
    config_to_dict,
    load_reference,
    parse_config,
    reference_config_path,
    write_config,
)
from coevo.engine import run
from coevo.report import MetricsReport, read_report, write_report
from coevo.workload import generate_events, read_trace, write_trace


def ref_dict():
    return config_to_dict(load_reference())


def test_reference_round_trips(tmp_path):
    cfg = parse_config(reference_config_path())
    text = canonical_json(config_to_dict(cfg))
    assert reference_config_path().read_text() == text
    out = tmp_path / "c.json"
    write_config(cfg, out)
    assert out.read_text() == text
    assert config_to_dict(parse_config(out)) == config_to_dict(cfg)


def test_negative_bandwidth_names_field():
    d = ref_dict()
    d["network"]["bandwidth_bytes_per_s"] = -5
    with pytest.raises(SchemaError) as e:
        config_from_dict(d)
    assert e.value.locator == "network.bandwidth_bytes_per_s"


def test_nested_locator_uses_list_index():
    d = ref_dict()
    d["clients"][1]["window"] = 0
    with pytest.raises(SchemaError) as e:
        config_from_dict(d)
    assert e.value.locator == "clients[1].window"


def test_unknown_field_rejected():
    d = ref_dict()
    d["gpu_count"] = 4
    with pytest.raises(UnknownFieldError) as e:
        config_from_dict(d)
    assert "gpu_count" in str(e.value)


def test_unresolved_task_reference():
    d = ref_dict()
    d["clients"][0]["task"] = "nope"
    with pytest.raises(SchemaError) as e:
        config_from_dict(d)
    assert e.value.locator.startswith("clients[0]")


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ConfigNotFoundError):
        parse_config(tmp_path / "absent.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{ not json")
    with pytest.raises(ConfigSyntaxError):
        parse_config(bad)


def test_error_classes_are_distinct():
    kinds = {ConfigNotFoundError, ConfigSyntaxError, SchemaError, UnknownFieldError}
    assert len({k.kind for k in kinds}) == 4


def empty_report():
    return MetricsReport(mode="coevolve", seed=0, tasks={}, lowest_acc=None, mean_acc=None)


def test_empty_report_files(tmp_path):
    paths = write_report(empty_report(), tmp_path)
    rep = json.loads(paths["report"].read_text())
    assert rep["request_count"] == 0 and rep["gpu_seconds"] == 0 and rep["bytes_uploaded"] == 0
    assert paths["timeline"].read_text() == "t,task_id,accuracy\n"
    assert paths["events"].read_text() == ""


def test_report_lowest_matches_csv(tmp_path):
    rep, records = run(load_reference(), "coevolve")
    paths = write_report(rep, tmp_path, records)
    rows = list(csv.DictReader(io.StringIO(paths["timeline"].read_text())))
    for task, m in rep.tasks.items():
        accs = [float(r["accuracy"]) for r in rows if r["task_id"] == task]
        assert len(accs) == len(m.timeline)
        assert min(accs) == m.lowest_acc
    assert read_report(paths["report"]).to_dict() == rep.to_dict()


def test_rewriting_report_is_byte_identical(tmp_path):
    rep, records = run(load_reference(), "independent", seed=3)
    a = write_report(rep, tmp_path / "a", records)
    b = write_report(read_report(a["report"]), tmp_path / "b", records)
    for k in ("report", "timeline", "events"):
        assert a[k].read_bytes() == b[k].read_bytes()


def test_write_report_surfaces_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError) as e:
        write_report(empty_report(), blocker / "sub")
    assert "file" in str(e.value)


def test_trace_is_deterministic(tmp_path):
    cfg = load_reference()
    write_trace(generate_events(cfg, 9), tmp_path / "a.jsonl", 9)
    write_trace(generate_events(cfg, 9), tmp_path / "b.jsonl", 9)
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    seed, events = read_trace(tmp_path / "a.jsonl")
    assert seed == 9 and events == json.loads(json.dumps(generate_events(cfg, 9)))


def test_different_seeds_differ():
    cfg = load_reference()
    assert generate_events(cfg, 1) != generate_events(cfg, 2)


def test_zero_arrival_rate_gives_only_drift():
    d = ref_dict()
    for c in d["clients"]:
        c["arrival_rate_hz"] = 0.0
    events = generate_events(config_from_dict(d), 42)
    assert events and {e["type"] for e in events} == {"drift"}


def test_replayed_trace_gives_same_report(tmp_path):
    cfg = load_reference()
    write_trace(generate_events(cfg, 42), tmp_path / "t.jsonl", 42)
    _, events = read_trace(tmp_path / "t.jsonl")
    assert run(cfg, "coevolve", events=events)[0].to_dict() == run(cfg, "coevolve")[0].to_dict()
