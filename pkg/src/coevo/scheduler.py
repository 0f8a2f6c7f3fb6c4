"""Windowed, priority-ordered dispatch of fused retraining groups onto GPUs."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

from .iocost import JobCost, MemoryModel, job_cost, reorder_batches
from .planner import FusionGroup, InfeasibleJobError, greedy_fuse

log = logging.getLogger(__name__)


@dataclass
class Gpu:
    gpu_id: str
    mem_mb: float
    busy_until: float = 0.0

    def __post_init__(self):
        if self.mem_mb <= 0:
            raise ValueError(f"gpu {self.gpu_id}: mem_mb must be > 0")


@dataclass
class ResourcePool:
    gpus: list[Gpu]

    @classmethod
    def default(cls) -> ResourcePool:
        # two 10 GB cards
        return cls([Gpu("gpu0", 10240.0), Gpu("gpu1", 10240.0)])

    @property
    def max_mem_mb(self) -> float:
        return max(g.mem_mb for g in self.gpus)


@dataclass
class ScheduledJob:
    group: FusionGroup
    gpu_id: str
    t_start: float
    t_end: float
    priority_at_dispatch: float
    requests: tuple = ()
    order: tuple[str, ...] = ()
    cost: JobCost | None = None
    done: bool = False


@dataclass(frozen=True)
class Outcome:
    request: object
    task_id: str
    dataset: tuple[str, ...]
    t: float


@dataclass(frozen=True)
class SchedulerConfig:
    window_s: float = 5.0
    t_norm_s: float = 60.0
    overhead_mflop: float = 500.0
    adapter_dim: int = 8
    insertion_points: tuple | None = None
    memory: MemoryModel = field(default_factory=MemoryModel)
    derive_reuse_ratio: bool = True
    throughput_mflops: float = 5000.0
    allow_fusion: bool = True


def priority(req, now: float, demand_gpu_seconds: float, t_norm: float) -> float:
    """Urgency (accuracy drop, inflated by waiting time) per GPU-second of demand."""
    if demand_gpu_seconds <= 0:
        raise ValueError("demand must be positive")
    urgency = req.drift.delta_acc * (1.0 + (now - req.t_arrival) / t_norm)
    return urgency / demand_gpu_seconds


def group_memory_model(group: FusionGroup, cfg: SchedulerConfig) -> MemoryModel:
    if not cfg.derive_reuse_ratio:
        return cfg.memory
    n_blocks = max(j.n_blocks for j in group.members)
    return replace(cfg.memory, reuse_ratio=group.shared_prefix / n_blocks)


def cost_group(group: FusionGroup, batches: dict, cfg: SchedulerConfig):
    """Reordered batch ids and the resulting cost estimate of one group."""
    mm = group_memory_model(group, cfg)
    full = max(sum(j.flops_per_block) for j in group.members)
    items = [batches[i] for i in group.dataset]
    order = reorder_batches(items, mm, full)
    cost = job_cost(group, [batches[i] for i in order], mm, cfg.throughput_mflops)
    return tuple(order), cost


def _pick_gpu(pool: ResourcePool, mem_mb: float, now: float):
    fitting = [g for g in pool.gpus if g.mem_mb >= mem_mb]
    if not fitting:
        return None
    # earliest availability, then tightest fit, then pool order
    return min(fitting, key=lambda g: (max(now, g.busy_until), g.mem_mb - mem_mb))


def dispatch_window(pending, pool: ResourcePool, now: float, cfg: SchedulerConfig, make_job, batches: dict,
                    records: list | None = None):
    """Plan and place every pending request; returns (scheduled, still_pending).

    ``make_job`` maps a request to its RetrainJob (job id = request id). A
    request whose job alone cannot fit the largest GPU is dropped with a
    diagnostic. Placement is non-preemptive: a job queued on a busy GPU starts
    when that GPU frees up.
    """
    records = records if records is not None else []
    if not pending:
        return [], []
    reqs = {r.request_id: r for r in pending}
    jobs = [make_job(r) for r in sorted(pending, key=lambda r: r.request_id)]
    while True:
        try:
            groups = greedy_fuse(jobs, pool.max_mem_mb, cfg.overhead_mflop, cfg.adapter_dim,
                                 cfg.insertion_points, allow_fusion=cfg.allow_fusion)
            break
        except InfeasibleJobError as e:
            log.warning("dropping request %s: %s", e.job_id, e)
            records.append({"type": "drop", "t": now, "jobs": [e.job_id], "reason": str(e)})
            jobs = [j for j in jobs if j.job_id != e.job_id]
            del reqs[e.job_id]
    ranked = []
    for g in groups:
        order, cost = cost_group(g, batches, cfg)
        prio = max(priority(reqs[j], now, cost.gpu_seconds, cfg.t_norm_s) for j in g.jobs)
        ranked.append((-prio, min(g.jobs), g, order, cost))
    ranked.sort(key=lambda t: (t[0], t[1]))
    scheduled, left = [], []
    for neg_prio, _, g, order, cost in ranked:
        gpu = _pick_gpu(pool, g.mem_mb, now)
        if gpu is None:
            left.extend(reqs[j] for j in g.jobs)
            records.append({"type": "defer", "t": now, "jobs": list(g.jobs), "priority": -neg_prio,
                            "mem_mb": g.mem_mb})
            continue
        t_start = max(now, gpu.busy_until)
        sj = ScheduledJob(g, gpu.gpu_id, t_start, t_start + cost.gpu_seconds, -neg_prio,
                          tuple(reqs[j] for j in g.jobs), order, cost)
        gpu.busy_until = sj.t_end
        scheduled.append(sj)
        records.append({
            "type": "dispatch", "t": now, "gpu": gpu.gpu_id, "jobs": list(g.jobs), "priority": sj.priority_at_dispatch,
            "t_start": sj.t_start, "t_end": sj.t_end, "mem_mb": g.mem_mb, "gpu_seconds": cost.gpu_seconds,
            "mflopeq": cost.mflopeq, "hits": cost.hits, "misses": cost.misses, "savings_mflop": g.savings_mflop,
            "order": list(order), "arrivals": [reqs[j].t_arrival for j in g.jobs],
        })
    return scheduled, left


def complete_job(job: ScheduledJob, now: float) -> list[Outcome]:
    """Mark ``job`` finished at its end time; one outcome per member task."""
    if job.done:
        raise RuntimeError(f"job {job.group.jobs} on {job.gpu_id} already completed")
    if abs(now - job.t_end) > 1e-9:
        raise ValueError(f"completion at {now} but job ends at {job.t_end}")
    job.done = True
    members = {m.job_id: m for m in job.group.members}
    return [Outcome(r, r.task_id, members[r.request_id].dataset, now) for r in job.requests]


class Scheduler:
    """Edge-side state machine: queues arrived requests and dispatches each window."""

    def __init__(self, pool: ResourcePool, cfg: SchedulerConfig, make_job, batches: dict):
        self.pool = pool
        self.cfg = cfg
        self.make_job = make_job
        self.batches = batches
        self.pending: list = []
        self.running: list[ScheduledJob] = []
        self.records: list[dict] = []

    def submit(self, req) -> None:
        self.pending.append(req)

    def window(self, now: float) -> list[ScheduledJob]:
        scheduled, self.pending = dispatch_window(self.pending, self.pool, now, self.cfg, self.make_job,
                                                  self.batches, self.records)
        self.running.extend(scheduled)
        return scheduled

    def complete(self, job: ScheduledJob, now: float) -> list[Outcome]:
        out = complete_job(job, now)
        self.running.remove(job)
        self.records.append({"type": "complete", "t": now, "gpu": job.gpu_id, "jobs": list(job.group.jobs)})
        return out

    @property
    def busy(self) -> bool:
        return bool(self.pending or self.running)
