"""Computation-reuse planning over pending retraining jobs.

Jobs on the same backbone family that read the same batches can share the
forward pass over their common backbone prefix. The planner scores every pair,
agglomerates jobs greedily under a GPU memory cap, and attaches per-task
bottleneck adapters to each fused group.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace

BYTES_PER_PARAM = 4
# weights, gradients and two optimizer moments per trainable parameter
ADAPTER_STATE_COPIES = 4
MB = 1024 * 1024


class InfeasibleJobError(ValueError):
    def __init__(self, job_id: str, mem_mb: float, cap_mb: float):
        super().__init__(f"job {job_id!r} needs {mem_mb:.1f} MB, exceeding GPU memory {cap_mb:.1f} MB")
        self.job_id = job_id


@dataclass(frozen=True)
class RetrainJob:
    job_id: str
    task_id: str
    backbone_family: str
    flops_per_block: tuple[float, ...]
    epochs: int
    dataset: tuple[str, ...]
    mem_model_mb: float
    mem_act_mb: float
    d_block: int = 256
    request: object = None

    def __post_init__(self):
        object.__setattr__(self, "flops_per_block", tuple(float(f) for f in self.flops_per_block))
        object.__setattr__(self, "dataset", tuple(self.dataset))
        if not self.flops_per_block:
            raise ValueError(f"job {self.job_id}: needs at least one block")
        if self.epochs < 1:
            raise ValueError(f"job {self.job_id}: epochs must be >= 1")
        if not self.dataset:
            raise ValueError(f"job {self.job_id}: empty dataset")

    @property
    def n_blocks(self) -> int:
        return len(self.flops_per_block)

    def standalone_mflop(self) -> float:
        return sum(self.flops_per_block) * len(set(self.dataset)) * self.epochs


def adapter_params(d_block: int, r: int) -> int:
    """Trainable parameters of one bottleneck adapter: down, up and their biases."""
    return 2 * d_block * r + r + d_block


@dataclass(frozen=True)
class AdapterPlan:
    frozen_prefix: int
    insertion_points: tuple[int, ...]
    adapter_dim: int
    per_task_adapters: dict
    active_tasks: frozenset

    @property
    def trainable_params(self) -> int:
        return sum(sum(self.per_task_adapters[t]) for t in self.active_tasks)

    @property
    def total_params(self) -> int:
        return sum(sum(v) for v in self.per_task_adapters.values())

    def to_dict(self) -> dict:
        return {
            "frozen_prefix": self.frozen_prefix,
            "insertion_points": list(self.insertion_points),
            "adapter_dim": self.adapter_dim,
            "per_task_adapters": {k: list(v) for k, v in sorted(self.per_task_adapters.items())},
            "active_tasks": sorted(self.active_tasks),
            "trainable_params": self.trainable_params,
        }


@dataclass(frozen=True)
class FusionGroup:
    jobs: tuple[str, ...]
    shared_prefix: int
    shared_batches: frozenset
    adapter_plan: AdapterPlan
    est_cost_mflop: float
    mem_mb: float
    savings_mflop: float = 0.0
    members: tuple = field(default=(), repr=False, compare=False)

    @property
    def dataset(self) -> tuple[str, ...]:
        """Union of member datasets, sorted."""
        return tuple(sorted({b for j in self.members for b in j.dataset}))

    def to_dict(self) -> dict:
        return {
            "jobs": list(self.jobs),
            "shared_prefix": self.shared_prefix,
            "shared_batches": sorted(self.shared_batches),
            "adapter_plan": self.adapter_plan.to_dict(),
            "est_cost_mflop": self.est_cost_mflop,
            "mem_mb": self.mem_mb,
            "savings_mflop": self.savings_mflop,
        }


def pairwise_savings(a: RetrainJob, b: RetrainJob) -> float:
    """Forward-pass MFLOP saved by sharing the common prefix over common batches."""
    if a.backbone_family != b.backbone_family:
        return 0.0
    p = min(a.n_blocks, b.n_blocks)
    n_shared = len(set(a.dataset) & set(b.dataset))
    prefix = sum(min(fa, fb) for fa, fb in zip(a.flops_per_block[:p], b.flops_per_block[:p]))
    return n_shared * prefix * min(a.epochs, b.epochs)


def pairwise_benefit(a: RetrainJob, b: RetrainJob, overhead_mflop: float) -> float:
    return pairwise_savings(a, b) - overhead_mflop


@dataclass
class ReuseGraph:
    nodes: list[str]
    weights: dict  # (job_id, job_id) with the smaller id first -> benefit

    @property
    def fusable(self) -> dict:
        return {k: w for k, w in self.weights.items() if w > 0}


def build_reuse_graph(jobs, overhead_mflop: float) -> ReuseGraph:
    ids = [j.job_id for j in jobs]
    if len(set(ids)) != len(ids):
        dup = sorted({i for i in ids if ids.count(i) > 1})
        raise ValueError(f"duplicate job_id: {', '.join(dup)}")
    weights = {}
    for a, b in itertools.combinations(sorted(jobs, key=lambda j: j.job_id), 2):
        weights[(a.job_id, b.job_id)] = pairwise_benefit(a, b, overhead_mflop)
    return ReuseGraph(sorted(ids), weights)


def job_adapter_mb(job: RetrainJob, r: int) -> float:
    return job.n_blocks * adapter_params(job.d_block, r) * BYTES_PER_PARAM * ADAPTER_STATE_COPIES / MB


def group_memory(members, r: int) -> float:
    return (max(j.mem_model_mb for j in members)
            + sum(job_adapter_mb(j, r) for j in members)
            + max(j.mem_act_mb for j in members))


def group_savings(members, overhead_mflop: float) -> float:
    """Net saving of running ``members`` fused: pairwise savings minus one overhead per merge."""
    s = sum(pairwise_savings(a, b) for a, b in itertools.combinations(members, 2))
    return s - overhead_mflop * (len(members) - 1)


def group_cost(members, overhead_mflop: float) -> float:
    return sum(j.standalone_mflop() for j in members) - group_savings(members, overhead_mflop)


def partition_cost(groups, overhead_mflop: float) -> float:
    return sum(group_cost(g, overhead_mflop) for g in groups)


def make_adapter_plan(members, adapter_dim: int = 8, insertion_points=None) -> AdapterPlan:
    """Adapters for every (task, insertion point); every member task starts active.

    ``insertion_points`` defaults to every block of the shortest member. A
    singleton group freezes nothing beyond its own backbone sharing (prefix 0).
    """
    members = list(members)
    if not members:
        raise ValueError("empty group")
    min_l = min(j.n_blocks for j in members)
    points = tuple(range(1, min_l + 1)) if insertion_points is None else tuple(insertion_points)
    bad = [p for p in points if not 1 <= p <= min_l]
    if bad:
        raise ValueError(f"insertion points {bad} outside [1, {min_l}]")
    prefix = min_l if len(members) > 1 else 0
    per_task: dict = {}
    for j in sorted(members, key=lambda j: j.job_id):
        per_task.setdefault(j.task_id, [])
        per_task[j.task_id].extend(adapter_params(j.d_block, adapter_dim) for _ in points)
    per_task = {k: tuple(v) for k, v in per_task.items()}
    return AdapterPlan(prefix, points, adapter_dim, per_task, frozenset(per_task))


def toggle_task(plan: AdapterPlan, task_id: str, active: bool) -> AdapterPlan:
    if task_id not in plan.per_task_adapters:
        raise KeyError(f"unknown task {task_id!r}")
    tasks = set(plan.active_tasks)
    if active:
        tasks.add(task_id)
    else:
        tasks.discard(task_id)
    return replace(plan, active_tasks=frozenset(tasks))


def _make_group(members, overhead_mflop: float, adapter_dim: int, insertion_points) -> FusionGroup:
    members = sorted(members, key=lambda j: j.job_id)
    shared = frozenset.intersection(*(frozenset(j.dataset) for j in members))
    plan = make_adapter_plan(members, adapter_dim, insertion_points)
    return FusionGroup(
        jobs=tuple(j.job_id for j in members),
        shared_prefix=plan.frozen_prefix,
        shared_batches=shared if len(members) > 1 else frozenset(),
        adapter_plan=plan,
        est_cost_mflop=group_cost(members, overhead_mflop),
        mem_mb=group_memory(members, adapter_dim),
        savings_mflop=group_savings(members, overhead_mflop),
        members=tuple(members),
    )


def greedy_fuse(jobs, gpu_mem_mb: float, overhead_mflop: float = 500.0, adapter_dim: int = 8,
                insertion_points=None, allow_fusion: bool = True) -> list[FusionGroup]:
    """Greedy pairwise agglomeration of jobs into fused groups.

    Each step merges the feasible pair of groups with the largest positive
    benefit (cross-group savings minus one overhead); ties go to the pair with
    the smallest (min job id, min job id). Groups come back sorted by their
    smallest job id.
    """
    build_reuse_graph(jobs, overhead_mflop)  # rejects duplicate ids
    for j in jobs:
        need = group_memory([j], adapter_dim)
        if need > gpu_mem_mb:
            raise InfeasibleJobError(j.job_id, need, gpu_mem_mb)
    groups = [[j] for j in sorted(jobs, key=lambda j: j.job_id)]
    pair = {}
    if allow_fusion:
        for a, b in itertools.combinations(jobs, 2):
            pair[(a.job_id, b.job_id)] = pair[(b.job_id, a.job_id)] = pairwise_savings(a, b)
    while allow_fusion and len(groups) > 1:
        best = None
        for i, j in itertools.combinations(range(len(groups)), 2):
            g1, g2 = groups[i], groups[j]
            gain = sum(pair[(a.job_id, b.job_id)] for a in g1 for b in g2) - overhead_mflop
            if gain <= 0 or group_memory(g1 + g2, adapter_dim) > gpu_mem_mb:
                continue
            key = (-gain, g1[0].job_id, g2[0].job_id)
            if best is None or key < best[0]:
                best = (key, i, j)
        if best is None:
            break
        _, i, j = best
        merged = sorted(groups[i] + groups[j], key=lambda x: x.job_id)
        groups = [g for k, g in enumerate(groups) if k not in (i, j)] + [merged]
        groups.sort(key=lambda g: g[0].job_id)
    return [_make_group(g, overhead_mflop, adapter_dim, insertion_points) for g in groups]
