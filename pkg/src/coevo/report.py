"""Run metrics and their canonical on-disk form."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
from dataclasses import dataclass, field
from pathlib import Path


@dataclass
class TaskMetrics:
    timeline: list = field(default_factory=list)  # [t, accuracy] per profiling tick
    lowest_acc: float | None = None
    mean_acc: float | None = None


@dataclass
class MetricsReport:
    mode: str
    seed: int
    tasks: dict = field(default_factory=dict)
    lowest_acc: float | None = None
    mean_acc: float | None = None
    gpu_seconds: float = 0.0
    bytes_uploaded: int = 0
    cache_hit_ratio: float = 0.0
    fusion_savings_mflop: float = 0.0
    request_count: int = 0
    completed_requests: int = 0
    fused_groups: int = 0

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> MetricsReport:
        d = dict(d)
        d["tasks"] = {k: TaskMetrics(**v) for k, v in d["tasks"].items()}
        return cls(**d)


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def timeline_csv(report: MetricsReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "task_id", "accuracy"])
    rows = [(t, task, a) for task, m in report.tasks.items() for t, a in m.timeline]
    for t, task, a in sorted(rows, key=lambda r: (r[0], r[1])):
        w.writerow([repr(float(t)), task, repr(float(a))])
    return buf.getvalue()


def events_jsonl(records) -> str:
    return "".join(json.dumps(r, sort_keys=True, allow_nan=False) + "\n" for r in records)


def write_report(report: MetricsReport, out_dir, records=()) -> dict:
    """Write report.json, timeline.csv and events.jsonl; returns the paths."""
    d = Path(out_dir)
    paths = {"report": d / "report.json", "timeline": d / "timeline.csv", "events": d / "events.jsonl"}
    try:
        d.mkdir(parents=True, exist_ok=True)
        paths["report"].write_text(_dumps(report.to_dict()))
        paths["timeline"].write_text(timeline_csv(report))
        paths["events"].write_text(events_jsonl(records))
    except OSError as e:
        raise OSError(f"cannot write report to {e.filename or str(d)!r}: {e.strerror}") from e
    return paths


def read_report(path) -> MetricsReport:
    return MetricsReport.from_dict(json.loads(Path(path).read_text()))
