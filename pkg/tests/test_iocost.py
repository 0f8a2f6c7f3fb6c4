import numpy as np
import pytest
from hypothesis import given, strategies as st

from coevo.iocost import MemoryModel, job_cost, reorder_batches, simulate_cache
from coevo.planner import greedy_fuse, toggle_task, RetrainJob, FusionGroup
from dataclasses import replace

from generators import interleaved_clusters, random_sketch_batches, sketch_batch
from oracles import lru_walk


def mm(C=8, transfer=50.0, rho=0.5, theta=0.25):
    return MemoryModel(C, transfer, rho, theta)


def test_memory_model_validation():
    with pytest.raises(ValueError):
        MemoryModel(-1, 0, 0, 0)
    with pytest.raises(ValueError):
        MemoryModel(1, 0, 1.5, 0)


def test_reorder_trivial():
    b = [sketch_batch("x", [0.0], [1.0])]
    assert reorder_batches(b) == ["x"]
    same = [sketch_batch(i, [1.0, 2.0], [0.5, 0.5]) for i in ("c", "a", "b")]
    assert reorder_batches(same) == ["a", "b", "c"]
    with pytest.raises(ValueError):
        reorder_batches([])


def test_reorder_makes_clusters_contiguous():
    for seed in range(20):
        batches = interleaved_clusters(seed)
        order = reorder_batches(batches, mm(C=1), 400.0)
        assert sorted(order) == sorted(b.batch_id for b in batches)
        side = {b.batch_id: b.sketch.mean[0] > 1.5 for b in batches}
        labels = [side[i] for i in order]
        assert sum(labels[k] != labels[k + 1] for k in range(len(labels) - 1)) == 1
        by = {b.batch_id: b for b in batches}
        assert simulate_cache([by[i] for i in order], mm(C=1), 400).total_cost_mflopeq <= \
            simulate_cache(batches, mm(C=1), 400).total_cost_mflopeq


def test_cache_all_misses_at_zero_theta():
    bs = random_sketch_batches(3, n=10)
    r = simulate_cache(bs, mm(theta=0.0), 100.0)
    assert (r.hits, r.misses) == (0, 10)
    assert r.total_cost_mflopeq == pytest.approx(10 * 150.0)


def test_cache_identical_batches():
    bs = [sketch_batch(f"b{i}", [0.0, 1.0], [1.0, 1.0]) for i in range(6)]
    r = simulate_cache(bs, mm(C=1, rho=0.75), 100.0)
    assert (r.hits, r.misses) == (5, 1)
    assert r.total_cost_mflopeq == pytest.approx(100 + 50 + 5 * 0.25 * 100)


def test_cache_zero_capacity_never_hits():
    bs = [sketch_batch(f"b{i}", [0.0], [1.0]) for i in range(5)]
    assert simulate_cache(bs, mm(C=0, theta=100.0), 10.0).hits == 0


@pytest.mark.parametrize("seed", range(10))
def test_cache_matches_reference_walk(seed):
    r = np.random.default_rng(seed)
    bs = random_sketch_batches(seed, n=20)
    C, theta = int(r.integers(0, 6)), float(r.uniform(0, 1.5))
    got = simulate_cache(bs, mm(C=C, theta=theta, rho=0.3), 200.0)
    ref = lru_walk([(b.sketch.mean.tolist(), b.sketch.std.tolist()) for b in bs], C, theta, 50.0, 0.3, 200.0)
    assert (got.total_cost_mflopeq, got.hits, got.misses) == pytest.approx(ref, abs=1e-9)


@given(st.integers(0, 2**31 - 1))
def test_cache_counts(seed):
    bs = random_sketch_batches(seed, n=12)
    r = simulate_cache(bs, mm(C=3, theta=0.6), 80.0)
    assert r.hits + r.misses == 12 and r.total_cost_mflopeq >= 0


def test_theta_sweep_not_monotone_under_lru():
    # one-slot cache, points 0,3,5,1: at theta=2 batches 5 and 1 hit the cached 3;
    # at theta=3 the 3 hits the cached 0 and is never inserted, so 5 and 1 miss
    bs = [sketch_batch(str(i), [x], [0.0]) for i, x in enumerate([0.0, 3.0, 5.0, 1.0])]
    lo = simulate_cache(bs, MemoryModel(1, 0.0, 0.0, 2.0), 1.0)
    hi = simulate_cache(bs, MemoryModel(1, 0.0, 0.0, 3.0), 1.0)
    assert (lo.misses, hi.misses) == (2, 3)


def _group_and_order(seed=11, epochs=2):
    r = np.random.default_rng(seed)
    batches = random_sketch_batches(seed, n=8)
    ids = [b.batch_id for b in batches]
    jobs = [
        RetrainJob("j0", "tA", "r50", [100.0] * 4, epochs, ids[:6], 3000, 1000),
        RetrainJob("j1", "tB", "r50", [100.0] * 4, epochs, ids[2:], 3000, 1000),
    ]
    (group,) = greedy_fuse(jobs, 10240, 500)
    return group, batches


def test_job_cost_reference_group():
    group, batches = _group_and_order()
    m = mm(C=4, theta=0.5, rho=1.0)
    c = job_cost(group, batches, m, 5000.0)
    sim = simulate_cache(batches, m, 400.0)
    expected = sim.total_cost_mflopeq * 2 * 1.2
    assert c.mflopeq == pytest.approx(expected)
    assert c.gpu_seconds == pytest.approx(expected / 5000.0)
    assert (c.hits, c.misses) == (sim.hits, sim.misses)


def test_job_cost_linear_in_epochs():
    g1, batches = _group_and_order(epochs=2)
    g2, _ = _group_and_order(epochs=4)
    m = mm()
    assert job_cost(g2, batches, m).mflopeq == 2 * job_cost(g1, batches, m).mflopeq


def test_job_cost_no_active_tasks_is_backbone_only():
    group, batches = _group_and_order()
    plan = group.adapter_plan
    for t in list(plan.active_tasks):
        plan = toggle_task(plan, t, False)
    off = replace(group, adapter_plan=plan)
    m = mm()
    assert job_cost(off, batches, m).mflopeq == simulate_cache(batches, m, 400.0).total_cost_mflopeq * 2


def test_job_cost_rejects_mismatched_order():
    group, batches = _group_and_order()
    with pytest.raises(ValueError):
        job_cost(group, batches[:-1], mm())
