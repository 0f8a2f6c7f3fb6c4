"""Two-level memory cost model for prefix-activation reuse and batch reordering."""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass

from .sketches import w2_distance


@dataclass(frozen=True)
class MemoryModel:
    fast_capacity_slots: int = 8
    transfer_cost_mflopeq: float = 50.0
    reuse_ratio: float = 0.0
    sim_threshold: float = 0.25

    def __post_init__(self):
        if self.fast_capacity_slots < 0:
            raise ValueError("fast_capacity_slots must be >= 0")
        if not 0.0 <= self.reuse_ratio <= 1.0:
            raise ValueError("reuse_ratio must lie in [0, 1]")
        if self.sim_threshold < 0 or self.transfer_cost_mflopeq < 0:
            raise ValueError("sim_threshold and transfer cost must be >= 0")


@dataclass(frozen=True)
class CacheResult:
    total_cost_mflopeq: float
    hits: int
    misses: int


def simulate_cache(order, mm: MemoryModel, full_forward_mflop: float) -> CacheResult:
    """Walk ``order`` through an LRU cache of prefix-activation sketches.

    A batch hits when some cached sketch lies within ``sim_threshold`` (W2);
    the closest such entry is refreshed, ties going to the most recently used
    one, and the batch itself is not inserted. A miss pays the full forward
    pass plus the transfer charge and inserts the batch's sketch.
    """
    cache: OrderedDict = OrderedDict()  # slot -> sketch, least recent first
    hit_cost = (1.0 - mm.reuse_ratio) * full_forward_mflop
    miss_cost = full_forward_mflop + mm.transfer_cost_mflopeq
    total, hits, misses = 0.0, 0, 0
    for seq, batch in enumerate(order):
        match = None
        if mm.fast_capacity_slots > 0:
            best_d = None
            for slot, sk in reversed(cache.items()):
                d = w2_distance(batch.sketch, sk)
                if d <= mm.sim_threshold and (best_d is None or d < best_d):
                    match, best_d = slot, d
        if match is not None:
            cache.move_to_end(match)
            total += hit_cost
            hits += 1
            continue
        total += miss_cost
        misses += 1
        if mm.fast_capacity_slots > 0:
            if len(cache) >= mm.fast_capacity_slots:
                cache.popitem(last=False)
            cache[seq] = batch.sketch
    return CacheResult(total, hits, misses)


def chain_order(batches) -> list:
    """Nearest-neighbour chain from the smallest id, ties to the smaller id."""
    if not batches:
        raise ValueError("empty batch list")
    rest = sorted(batches, key=lambda b: b.batch_id)
    out = [rest.pop(0)]
    while rest:
        last = out[-1].sketch
        k = min(range(len(rest)), key=lambda i: (w2_distance(last, rest[i].sketch), rest[i].batch_id))
        out.append(rest.pop(k))
    return out


def reorder_batches(batches, mm: MemoryModel | None = None, full_forward_mflop: float = 1.0) -> list[str]:
    """Reorganize batches so similar ones are adjacent; returns batch ids.

    With a memory model, the chained order is kept only if it is no more
    expensive than the given order.
    """
    batches = list(batches)
    chained = chain_order(batches)
    if mm is not None:
        if simulate_cache(chained, mm, full_forward_mflop).total_cost_mflopeq > \
                simulate_cache(batches, mm, full_forward_mflop).total_cost_mflopeq:
            chained = batches
    return [b.batch_id for b in chained]


def active_multiplier(n_active: int) -> float:
    """Each extra active adapter set adds a fifth of the backbone pass."""
    return 1.0 + 0.2 * max(0, n_active - 1)


@dataclass(frozen=True)
class JobCost:
    gpu_seconds: float
    mflopeq: float
    hits: int
    misses: int


def job_cost(group, order, mm: MemoryModel, throughput_mflops: float = 5000.0) -> JobCost:
    """Cost of running a fused group over ``order`` for the longest member's epochs."""
    ids = sorted(b.batch_id for b in order)
    if ids != sorted(group.dataset):
        raise ValueError(f"order {ids} does not cover group dataset {sorted(group.dataset)}")
    if throughput_mflops <= 0:
        raise ValueError("throughput must be positive")
    full = max(sum(j.flops_per_block) for j in group.members)
    res = simulate_cache(order, mm, full)
    epochs = max(j.epochs for j in group.members)
    mflopeq = res.total_cost_mflopeq * epochs * active_multiplier(len(group.adapter_plan.active_tasks))
    return JobCost(mflopeq / throughput_mflops, mflopeq, res.hits, res.misses)
