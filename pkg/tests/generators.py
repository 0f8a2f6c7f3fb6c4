"""Seeded random instance families shared by unit and acceptance tests."""

from types import SimpleNamespace

import numpy as np

from coevo.planner import RetrainJob, group_memory
from coevo.sketches import GaussianSketch

BLOCK_PROFILES = {
    "r50": [60.0, 80.0, 100.0, 120.0, 120.0, 140.0, 160.0, 180.0],
    "mbv2": [20.0, 30.0, 30.0, 40.0, 40.0, 50.0, 50.0, 60.0],
}


def fusion_instance(seed, n_jobs=5):
    r = np.random.default_rng(seed)
    jobs = []
    for k in range(n_jobs):
        fam = ["r50", "mbv2"][int(r.integers(0, 2))]
        n_blocks = int(r.integers(4, 9))
        ds = sorted(int(i) for i in r.choice(10, size=int(r.integers(2, 7)), replace=False))
        jobs.append(RetrainJob(
            job_id=f"j{k}", task_id=f"t{k}", backbone_family=fam,
            flops_per_block=BLOCK_PROFILES[fam][:n_blocks], epochs=int(r.integers(1, 5)),
            dataset=[f"b{i}" for i in ds],
            mem_model_mb=float(r.uniform(1500, 4500)), mem_act_mb=float(r.uniform(800, 2500)),
        ))
    # just above the largest singleton, so memory rejects some merges
    gpu_mem = max(group_memory([j], 8) for j in jobs) + float(r.uniform(0.0, 3000.0))
    return jobs, gpu_mem


def sketch_batch(batch_id, mean, std, count=20):
    return SimpleNamespace(batch_id=batch_id, sketch=GaussianSketch(mean, std, count), samples_count=count)


def random_sketch_batches(seed, n=20, d=2):
    r = np.random.default_rng(seed)
    return [
        sketch_batch(f"b{i:02d}", r.normal(0, 1, d), np.abs(r.normal(1, 0.3, d)), int(r.integers(1, 40)))
        for i in range(n)
    ]


def interleaved_clusters(seed, theta=0.25, max_n=7):
    """Two well-separated clusters whose members alternate in the input order.

    Member spread is theta/5 per coordinate, so most same-cluster pairs lie
    within theta of each other.
    """
    r = np.random.default_rng(seed)
    n = int(r.integers(3, max_n + 1))
    centers = [np.zeros(2), np.array([3.0, 0.0])]
    noise = theta / 5
    return [
        sketch_batch(f"b{i:02d}", centers[i % 2] + r.normal(0, noise, 2), np.abs(1 + r.normal(0, noise, 2)))
        for i in range(n)
    ]
