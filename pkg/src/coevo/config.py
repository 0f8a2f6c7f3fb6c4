"""Scenario configuration: schema, validation with path locators, canonical JSON."""

from __future__ import annotations

import dataclasses
import json
from importlib import resources
from pathlib import Path
from typing import Annotated, Optional

from pydantic import ConfigDict, Field, TypeAdapter, ValidationError
from pydantic.dataclasses import dataclass

_STRICT = ConfigDict(extra="forbid")

Pos = Annotated[float, Field(gt=0)]
NonNeg = Annotated[float, Field(ge=0)]
Prob = Annotated[float, Field(ge=0, le=1)]
PosInt = Annotated[int, Field(ge=1)]
NonNegInt = Annotated[int, Field(ge=0)]


class ConfigError(Exception):
    """Base for every configuration problem; ``locator`` points into the document."""

    kind = "config error"

    def __init__(self, message: str, locator: str = ""):
        super().__init__(f"{self.kind}: {locator + ': ' if locator else ''}{message}")
        self.locator = locator


class ConfigNotFoundError(ConfigError):
    kind = "missing file"


class ConfigSyntaxError(ConfigError):
    kind = "malformed JSON"


class SchemaError(ConfigError):
    kind = "schema violation"


class UnknownFieldError(SchemaError):
    kind = "unknown field"


@dataclass(config=_STRICT)
class ThresholdsConfig:
    acc: float = 0.05
    feat: NonNeg = 0.5
    label: Prob = 0.2


@dataclass(config=_STRICT)
class BackboneConfig:
    family: str
    flops_per_block: Annotated[list[Pos], Field(min_length=1)]
    epochs: PosInt = 2
    d_block: PosInt = 256
    mem_model_mb: Pos = 3000.0
    mem_act_mb: NonNeg = 1500.0


@dataclass(config=_STRICT)
class ClientConfig:
    id: str
    task: str
    backbone: BackboneConfig
    view_offset: list[float]
    view_scale: list[Pos]
    window: PosInt = 100
    thresholds: ThresholdsConfig = dataclasses.field(default_factory=ThresholdsConfig)
    upload_budget_bytes: NonNegInt = 65536
    arrival_rate_hz: NonNeg = 0.5
    batch_size: PosInt = 20
    bytes_per_sample: PosInt = 512
    buffer_batches: PosInt = 16
    initial_acc: Prob = 0.88
    reference_acc: Prob = 0.9


@dataclass(config=_STRICT)
class DriftEventConfig:
    t: NonNeg
    drop: Prob = 0.0
    mean: Optional[list[float]] = None
    std: Optional[list[NonNeg]] = None
    weights: Optional[list[float]] = None
    bias: Optional[float] = None


@dataclass(config=_STRICT)
class DomainConfig:
    task: str
    mean: list[float]
    std: list[NonNeg]
    weights: list[float]
    bias: float = 0.0
    drift_schedule: list[DriftEventConfig] = dataclasses.field(default_factory=list)


@dataclass(config=_STRICT)
class GpuConfig:
    gpu_id: str
    mem_mb: Pos


@dataclass(config=_STRICT)
class PoolConfig:
    gpus: Annotated[list[GpuConfig], Field(min_length=1)] = dataclasses.field(
        default_factory=lambda: [GpuConfig("gpu0", 10240.0), GpuConfig("gpu1", 10240.0)]
    )


@dataclass(config=_STRICT)
class NetworkConfig:
    bandwidth_bytes_per_s: Pos = 1_000_000.0
    rtt_s: Pos = 0.05


@dataclass(config=_STRICT)
class PlannerConfig:
    overhead_mflop: NonNeg = 500.0
    adapter_dim: PosInt = 8
    insertion_points: Optional[list[PosInt]] = None


@dataclass(config=_STRICT)
class IoConfig:
    cache_slots: NonNegInt = 8
    sim_threshold: NonNeg = 0.25
    reuse_ratio: Optional[Prob] = None
    transfer_cost_mflopeq: NonNeg = 50.0
    throughput_mflops: Pos = 5000.0


@dataclass(config=_STRICT)
class SchedulerSection:
    window_s: Pos = 5.0
    t_norm_s: Pos = 60.0


@dataclass(config=_STRICT)
class CurveConfig:
    eta: Pos = 0.1
    scale: Pos = 1.0
    a_ceiling: Prob = 0.9


@dataclass(config=_STRICT)
class ReuseConfig:
    share_min: Prob = 0.25
    horizon_s: NonNeg = 60.0
    proxy_epochs: PosInt = 50


@dataclass(config=_STRICT)
class SimConfig:
    duration_s: Pos
    feature_dim: PosInt
    clients: Annotated[list[ClientConfig], Field(min_length=1)]
    domains: Annotated[list[DomainConfig], Field(min_length=1)]
    seed: int = 0
    pool: PoolConfig = dataclasses.field(default_factory=PoolConfig)
    network: NetworkConfig = dataclasses.field(default_factory=NetworkConfig)
    planner: PlannerConfig = dataclasses.field(default_factory=PlannerConfig)
    io: IoConfig = dataclasses.field(default_factory=IoConfig)
    scheduler: SchedulerSection = dataclasses.field(default_factory=SchedulerSection)
    curve: CurveConfig = dataclasses.field(default_factory=CurveConfig)
    reuse: ReuseConfig = dataclasses.field(default_factory=ReuseConfig)


_ADAPTER = TypeAdapter(SimConfig)


def _locator(loc) -> str:
    out = ""
    for part in loc:
        if isinstance(part, int):
            out += f"[{part}]"
        else:
            out += ("." if out else "") + str(part)
    return out


def _check_references(cfg: SimConfig) -> None:
    d = cfg.feature_dim

    def dim(vec, where):
        if vec is not None and len(vec) != d:
            raise SchemaError(f"expected {d} components, got {len(vec)}", where)

    tasks = {}
    for i, dom in enumerate(cfg.domains):
        where = f"domains[{i}]"
        if dom.task in tasks:
            raise SchemaError(f"duplicate domain for task {dom.task!r}", f"{where}.task")
        tasks[dom.task] = dom
        for name in ("mean", "std", "weights"):
            dim(getattr(dom, name), f"{where}.{name}")
        last = -1.0
        for k, ev in enumerate(dom.drift_schedule):
            ew = f"{where}.drift_schedule[{k}]"
            if ev.t < last:
                raise SchemaError("drift events must be in time order", f"{ew}.t")
            last = ev.t
            for name in ("mean", "std", "weights"):
                dim(getattr(ev, name), f"{ew}.{name}")
    ids = set()
    for i, c in enumerate(cfg.clients):
        where = f"clients[{i}]"
        if c.id in ids:
            raise SchemaError(f"duplicate client id {c.id!r}", f"{where}.id")
        ids.add(c.id)
        if c.task not in tasks:
            raise SchemaError(f"no domain for task {c.task!r}", f"{where}.task")
        dim(c.view_offset, f"{where}.view_offset")
        dim(c.view_scale, f"{where}.view_scale")
        if c.initial_acc > cfg.curve.a_ceiling:
            raise SchemaError("initial accuracy above the curve ceiling", f"{where}.initial_acc")
        pts = cfg.planner.insertion_points or []
        if pts and max(pts) > len(c.backbone.flops_per_block):
            raise SchemaError(f"insertion point beyond {len(c.backbone.flops_per_block)} blocks",
                              "planner.insertion_points")
    if len({g.gpu_id for g in cfg.pool.gpus}) != len(cfg.pool.gpus):
        raise SchemaError("duplicate gpu_id", "pool.gpus")


def config_from_dict(data) -> SimConfig:
    cfg = _validate(_ADAPTER, data)
    _check_references(cfg)
    return cfg


def parse_config(path) -> SimConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigNotFoundError(f"no such file {str(p)!r}")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise ConfigSyntaxError(f"{e.msg} at line {e.lineno} column {e.colno}", str(p)) from None
    return config_from_dict(data)


def config_to_dict(cfg: SimConfig) -> dict:
    return dataclasses.asdict(cfg)


def canonical_json(obj) -> str:
    """Sorted keys, two-space indent, shortest round-trip floats, trailing newline."""
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_config(cfg: SimConfig, path) -> None:
    Path(path).write_text(canonical_json(config_to_dict(cfg)))


def reference_config_path() -> Path:
    return Path(str(resources.files("coevo") / "configs" / "reference.json"))


def load_reference() -> SimConfig:
    return parse_config(reference_config_path())


@dataclass(config=_STRICT)
class SnapshotBatch:
    batch_id: str
    mean: list[float]
    std: list[NonNeg]
    count: PosInt = 1


@dataclass(config=_STRICT)
class SnapshotJob:
    job_id: str
    task_id: str
    backbone_family: str
    flops_per_block: Annotated[list[Pos], Field(min_length=1)]
    epochs: PosInt
    dataset: Annotated[list[str], Field(min_length=1)]
    mem_model_mb: NonNeg
    mem_act_mb: NonNeg
    d_block: PosInt = 256


@dataclass(config=_STRICT)
class SnapshotMemory:
    fast_capacity_slots: NonNegInt = 8
    transfer_cost_mflopeq: NonNeg = 50.0
    sim_threshold: NonNeg = 0.25
    reuse_ratio: Optional[Prob] = None


@dataclass(config=_STRICT)
class PlanSnapshot:
    """Pending-job snapshot consumed by the ``plan`` command."""

    jobs: list[SnapshotJob]
    batches: list[SnapshotBatch]
    gpu_mem_mb: Pos = 10240.0
    overhead_mflop: NonNeg = 500.0
    adapter_dim: PosInt = 8
    insertion_points: Optional[list[PosInt]] = None
    memory: SnapshotMemory = dataclasses.field(default_factory=SnapshotMemory)
    throughput_mflops: Pos = 5000.0


def _validate(adapter: TypeAdapter, data):
    try:
        return adapter.validate_python(data)
    except ValidationError as e:
        errors = e.errors()
        unknown = [er for er in errors if er["type"] in ("unexpected_keyword_argument", "extra_forbidden")]
        er = unknown[0] if unknown else errors[0]
        cls = UnknownFieldError if unknown else SchemaError
        msg = f"{er['loc'][-1]!r} is not a recognised field" if unknown else er["msg"]
        raise cls(msg, _locator(er["loc"])) from None


def parse_snapshot(path) -> PlanSnapshot:
    p = Path(path)
    if not p.is_file():
        raise ConfigNotFoundError(f"no such file {str(p)!r}")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise ConfigSyntaxError(f"{e.msg} at line {e.lineno} column {e.colno}", str(p)) from None
    snap = _validate(TypeAdapter(PlanSnapshot), data)
    known = {b.batch_id for b in snap.batches}
    for i, j in enumerate(snap.jobs):
        missing = sorted(set(j.dataset) - known)
        if missing:
            raise SchemaError(f"unknown batch ids {missing}", f"jobs[{i}].dataset")
    return snap
