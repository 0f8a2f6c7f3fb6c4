"""Sweep the cache similarity threshold on seeded instances and report where cost rises.

Also replays the four-point counterexample (one slot, points 0, 3, 5, 1).
"""

import argparse
from types import SimpleNamespace

import numpy as np

from coevo.iocost import MemoryModel, simulate_cache
from coevo.sketches import GaussianSketch


def batches(seed, n, d):
    r = np.random.default_rng(seed)
    return [SimpleNamespace(batch_id=f"b{i:02d}", sketch=GaussianSketch(r.normal(0, 1, d), np.abs(r.normal(1, 0.3, d)), 1))
            for i in range(n)]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=50)
    ap.add_argument("--slots", type=int, default=4)
    args = ap.parse_args()
    grid = np.round(np.arange(0, 2.05, 0.1), 2)
    bad = 0
    for seed in range(args.seeds):
        bs = batches(seed, 20, 2)
        costs = [simulate_cache(bs, MemoryModel(args.slots, 50.0, 0.5, float(t)), 200.0).total_cost_mflopeq for t in grid]
        rises = [(float(grid[k]), float(grid[k + 1])) for k in range(len(grid) - 1) if costs[k + 1] > costs[k] + 1e-9]
        if rises:
            bad += 1
            print(f"seed {seed}: cost rises over theta intervals {rises}")
    print(f"{bad}/{args.seeds} seeds not monotone")
    pts = [SimpleNamespace(batch_id=str(i), sketch=GaussianSketch([x], [0.0], 1)) for i, x in enumerate([0, 3, 5, 1])]
    for t in (2.0, 3.0):
        r = simulate_cache(pts, MemoryModel(1, 0.0, 0.0, t), 1.0)
        print(f"counterexample theta={t}: hits={r.hits} misses={r.misses}")


if __name__ == "__main__":
    main()
