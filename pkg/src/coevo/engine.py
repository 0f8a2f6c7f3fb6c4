"""Deterministic discrete-event simulation of client drift, uploads and edge retraining."""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .client import ClientAgent, DataBatch, ShiftClass, Thresholds, make_batch
from .config import SimConfig
from .iocost import MemoryModel
from .planner import RetrainJob
from .proxy import MappingProxy, fit_proxy
from .report import MetricsReport, TaskMetrics
from .scheduler import Gpu, ResourcePool, Scheduler, SchedulerConfig
from .sketches import GaussianSketch, LabelHistogram, merge_all, w2_distance
from .workload import generate_events, observation

MODES = ("coevolve", "independent")


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class DriftEvent:
    t: float
    drop: float = 0.0
    sketch: GaussianSketch | None = None
    weights: np.ndarray | None = None
    bias: float | None = None


@dataclass(frozen=True, eq=False)
class DomainState:
    task_id: str
    true_weights: np.ndarray
    true_bias: float
    domain_sketch: GaussianSketch
    drift_schedule: tuple = ()
    t: float = 0.0


@dataclass(frozen=True)
class AccuracyState:
    current_acc: float
    a_base: float
    a_ceiling: float = 0.9
    eta: float = 0.1


@dataclass(frozen=True)
class NetworkModel:
    bandwidth_bytes_per_s: float
    rtt_s: float

    def __post_init__(self):
        if self.bandwidth_bytes_per_s <= 0 or self.rtt_s <= 0:
            raise ValueError("bandwidth and rtt must be positive")


def inject_drift(domain: DomainState, acc: AccuracyState, event: DriftEvent):
    """Apply a drift event atomically; the accuracy floor drops by ``event.drop``."""
    if event.t < domain.t:
        raise SimulationError(f"drift at t={event.t} precedes domain time {domain.t}")
    domain = replace(
        domain,
        domain_sketch=event.sketch if event.sketch is not None else domain.domain_sketch,
        true_weights=event.weights if event.weights is not None else domain.true_weights,
        true_bias=event.bias if event.bias is not None else domain.true_bias,
        t=event.t,
    )
    floor = max(0.0, acc.current_acc - event.drop)
    return domain, replace(acc, current_acc=floor, a_base=floor)


def effective_samples(dataset, domain: DomainState, scale: float = 1.0) -> float:
    """Sample count discounted by each batch's distance from the current domain."""
    return float(sum(b.samples_count * math.exp(-w2_distance(b.sketch, domain.domain_sketch) / scale)
                     for b in dataset))


def coverage_ceiling(dataset, domain: DomainState, acc: AccuracyState, scale: float = 1.0) -> float:
    """Attainable accuracy given how well the pooled data covers the domain."""
    if not dataset:
        return acc.a_base
    merged = merge_all(b.sketch for b in dataset)
    cov = math.exp(-w2_distance(merged, domain.domain_sketch) / scale)
    return acc.a_base + (acc.a_ceiling - acc.a_base) * cov


def apply_retraining(acc: AccuracyState, n_eff: float, a_max: float) -> AccuracyState:
    """Saturating recovery toward ``a_max``; never lowers accuracy."""
    if n_eff < 0:
        raise ValueError("n_eff must be >= 0")
    if a_max < acc.current_acc:
        return acc
    new = acc.current_acc + (a_max - acc.current_acc) * (1.0 - math.exp(-acc.eta * n_eff))
    return replace(acc, current_acc=min(max(new, acc.current_acc), a_max))


def transfer_time(nbytes: int, net: NetworkModel) -> float:
    if nbytes < 0:
        raise ValueError("bytes must be >= 0")
    return nbytes / net.bandwidth_bytes_per_s + net.rtt_s


@dataclass
class _Stored:
    batch: DataBatch
    t_upload: float
    targets: tuple


@dataclass
class Simulation:
    cfg: SimConfig
    mode: str
    seed: int
    events: list
    records: list = field(default_factory=list)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        cfg = self.cfg
        self.coevolve = self.mode == "coevolve"
        self.net = NetworkModel(cfg.network.bandwidth_bytes_per_s, cfg.network.rtt_s)
        self.domains: dict[str, DomainState] = {}
        self.acc: dict[str, AccuracyState] = {}
        self.agents: dict[str, ClientAgent] = {}
        self.client_cfg = {c.id: c for c in cfg.clients}
        for d in cfg.domains:
            self.domains[d.task] = DomainState(
                d.task, np.asarray(d.weights, float), float(d.bias),
                GaussianSketch(d.mean, d.std, 1), tuple(d.drift_schedule),
            )
        self.published: dict[str, tuple] = {}
        for c in cfg.clients:
            dom = self.domains[c.task]
            self.acc[c.task] = AccuracyState(c.initial_acc, c.initial_acc, cfg.curve.a_ceiling, cfg.curve.eta)
            mean, std = observation({"mean": dom.domain_sketch.mean, "std": dom.domain_sketch.std}, c)
            view = GaussianSketch(mean, std, max(1, c.window))
            proxy = MappingProxy(c.task, 1, dom.true_weights, dom.true_bias)
            self.agents[c.id] = ClientAgent(
                client_id=c.id, task_id=c.task, window=c.window,
                thresholds=Thresholds(c.thresholds.acc, c.thresholds.feat, c.thresholds.label),
                reference_acc=c.reference_acc, budget_bytes=c.upload_budget_bytes,
                train_sketch=view, train_hist=LabelHistogram([0.5, 0.5]), proxy=proxy,
                recent_batches=max(1, -(-c.window // c.batch_size)), buffer_batches=c.buffer_batches,
            )
            self.published[c.task] = (view, proxy)
        io = cfg.io
        self.sched_cfg = SchedulerConfig(
            window_s=cfg.scheduler.window_s, t_norm_s=cfg.scheduler.t_norm_s,
            overhead_mflop=cfg.planner.overhead_mflop, adapter_dim=cfg.planner.adapter_dim,
            insertion_points=tuple(cfg.planner.insertion_points) if cfg.planner.insertion_points else None,
            memory=MemoryModel(io.cache_slots, io.transfer_cost_mflopeq, io.reuse_ratio or 0.0, io.sim_threshold),
            derive_reuse_ratio=io.reuse_ratio is None, throughput_mflops=io.throughput_mflops,
            allow_fusion=self.coevolve,
        )
        self.store: dict[str, _Stored] = {}
        self.batches: dict[str, DataBatch] = {}
        pool = ResourcePool([Gpu(g.gpu_id, g.mem_mb) for g in cfg.pool.gpus])
        self.scheduler = Scheduler(pool, self.sched_cfg, self._make_job, self.batches)
        self.scheduler.records = self.records
        self.timeline: dict[str, list] = {c.task: [] for c in cfg.clients}
        self.now = 0.0
        self.requests: dict[str, object] = {}
        self.completed: set[str] = set()
        self.bytes_uploaded = 0
        self.gpu_seconds = 0.0
        self.hits = 0
        self.misses = 0
        self.savings = 0.0
        self.fused_groups = 0
        self._queue: list = []
        self._seq = itertools.count()
        self._in_transit = 0
        self._next_window = None

    def _push(self, t: float, kind: str, payload) -> None:
        heapq.heappush(self._queue, (t, next(self._seq), kind, payload))

    def _make_job(self, req) -> RetrainJob:
        c = self.client_cfg[req.client_id]
        data = set(req.manifest)
        if self.coevolve:
            for bid, s in self.store.items():
                if (s.batch.origin_client != req.client_id and req.task_id in s.targets
                        and s.t_upload <= self.now and self.now - s.t_upload <= self.cfg.reuse.horizon_s):
                    data.add(bid)
        bb = c.backbone
        return RetrainJob(
            job_id=req.request_id, task_id=req.task_id, backbone_family=bb.family,
            flops_per_block=tuple(bb.flops_per_block), epochs=bb.epochs, dataset=tuple(sorted(data)),
            mem_model_mb=bb.mem_model_mb, mem_act_mb=bb.mem_act_mb, d_block=bb.d_block, request=req,
        )

    def run(self) -> MetricsReport:
        for ev in self.events:
            self._push(float(ev["t"]), ev["type"], ev)
        self._schedule_window(self.cfg.scheduler.window_s)
        last_t = -math.inf
        while self._queue:
            t, _, kind, payload = heapq.heappop(self._queue)
            if t < last_t:
                raise SimulationError(f"event queue went backwards: {t} < {last_t}")
            last_t = t
            self.now = t
            getattr(self, f"_on_{kind}")(t, payload)
        return self._report()

    def _on_drift(self, t, ev):
        task = ev["task"]
        sk = None
        dom = self.domains[task]
        if ev["mean"] is not None or ev["std"] is not None:
            sk = GaussianSketch(ev["mean"] if ev["mean"] is not None else dom.domain_sketch.mean,
                                ev["std"] if ev["std"] is not None else dom.domain_sketch.std, 1)
        event = DriftEvent(t, ev["drop"], sk,
                           np.asarray(ev["weights"], float) if ev["weights"] is not None else None, ev["bias"])
        self.domains[task], self.acc[task] = inject_drift(dom, self.acc[task], event)
        self.records.append({"type": "drift", "t": t, "task": task, "index": ev["index"],
                             "acc": self.acc[task].current_acc})

    def _remotes(self, task: str) -> dict:
        if not self.coevolve:
            return {}
        return {k: v for k, v in self.published.items() if k != task}

    def _on_arrival(self, t, ev):
        agent = self.agents[ev["client"]]
        batch = make_batch(ev["batch_id"], np.asarray(ev["samples"], float), np.asarray(ev["labels"], int),
                           ev["client"], nbytes=ev["bytes"])
        self.batches[batch.batch_id] = batch
        task = agent.task_id
        acc = self.acc[task].current_acc
        self.timeline[task].append((t, acc))
        agent.observe(batch, acc)
        if agent.outstanding is not None:
            return
        report = agent.drift_report()
        if report is None or report.shift_class is ShiftClass.NO_DRIFT:
            return
        published = (agent.recent_sketch(), agent.proxy)
        req, chosen, targets = agent.make_request(t, report, self._remotes(task), self.cfg.reuse.share_min,
                                                  lambda n: transfer_time(n, self.net))
        if req is None:
            return
        if self.coevolve:
            self.published[task] = published
        self.requests[req.request_id] = req
        self.bytes_uploaded += req.bytes_total
        self.records.append(req.to_record())
        self._in_transit += 1
        self._push(req.t_arrival, "request", (req, chosen, targets))
        if self._next_window is None:
            w = self.cfg.scheduler.window_s
            self._schedule_window(math.floor(t / w + 1e-9) * w + w)

    def _on_request(self, t, payload):
        req, chosen, targets = payload
        for b in chosen:
            self.store[b.batch_id] = _Stored(b, t, targets[b.batch_id])
        self._in_transit -= 1
        self.scheduler.submit(req)

    def _schedule_window(self, t: float) -> None:
        self._next_window = t
        self._push(t, "window", None)

    def _on_window(self, t, _):
        self._next_window = None
        for job in self.scheduler.window(t):
            self.gpu_seconds += job.cost.gpu_seconds
            self.hits += job.cost.hits
            self.misses += job.cost.misses
            if len(job.group.jobs) > 1:
                self.savings += job.group.savings_mflop
                self.fused_groups += 1
            self._push(job.t_end, "complete", job)
        nxt = t + self.cfg.scheduler.window_s
        if nxt <= self.cfg.duration_s + 1e-9 or self.scheduler.pending or self._in_transit:
            self._schedule_window(nxt)

    def _on_complete(self, t, job):
        for out in self.scheduler.complete(job, t):
            task = out.task_id
            data = [self.batches[b] for b in out.dataset]
            acc = self.acc[task]
            dom = self.domains[task]
            n_eff = effective_samples(data, dom, self.cfg.curve.scale)
            a_max = coverage_ceiling(data, dom, acc, self.cfg.curve.scale)
            self.acc[task] = apply_retraining(acc, n_eff, a_max)
            agent = self.agents[out.request.client_id]
            x = np.vstack([b.samples for b in data])
            y = np.concatenate([b.labels for b in data])
            proxy = fit_proxy(x, y, self.cfg.reuse.proxy_epochs, task_id=task, previous=agent.proxy)
            train = merge_all(b.sketch for b in data)
            agent.on_retrained(train, LabelHistogram.from_labels(y), proxy)
            if self.coevolve:
                self.published[task] = (self.published[task][0], proxy)
                self.records.append({"type": "publish", "t": t, "task": task, "proxy": proxy.to_dict()})
            self.completed.add(out.request.request_id)
            self.records.append({"type": "retrain", "t": t, "task": task, "request": out.request.request_id,
                                 "n_eff": n_eff, "a_max": a_max, "acc": self.acc[task].current_acc,
                                 "dataset": list(out.dataset)})

    def _report(self) -> MetricsReport:
        tasks = {}
        for task, rows in sorted(self.timeline.items()):
            accs = [a for _, a in rows]
            tasks[task] = TaskMetrics(
                timeline=[[t, a] for t, a in rows],
                lowest_acc=min(accs) if accs else None,
                mean_acc=sum(accs) / len(accs) if accs else None,
            )
        lows = [m.lowest_acc for m in tasks.values() if m.lowest_acc is not None]
        all_acc = [a for rows in self.timeline.values() for _, a in rows]
        lookups = self.hits + self.misses
        return MetricsReport(
            mode=self.mode, seed=self.seed, tasks=tasks,
            lowest_acc=min(lows) if lows else None,
            mean_acc=sum(all_acc) / len(all_acc) if all_acc else None,
            gpu_seconds=self.gpu_seconds, bytes_uploaded=self.bytes_uploaded,
            cache_hit_ratio=self.hits / lookups if lookups else 0.0,
            fusion_savings_mflop=self.savings, request_count=len(self.requests),
            completed_requests=len(self.completed), fused_groups=self.fused_groups,
        )


def run(cfg: SimConfig, mode: str, seed: int | None = None, events: list | None = None):
    """Simulate one scenario; returns (MetricsReport, event records).

    ``events`` replays a pre-generated workload; otherwise it is generated
    from ``seed`` (default: the config's seed).
    """
    seed = cfg.seed if seed is None else seed
    if events is None:
        events = generate_events(cfg, seed)
    sim = Simulation(cfg, mode, seed, events)
    report = sim.run()
    return report, sim.records
