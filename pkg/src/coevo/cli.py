"""Command-line entry points: simulate, gen-trace, plan, sweep."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from types import SimpleNamespace

from .config import ConfigError, canonical_json, parse_config, parse_snapshot
from .engine import MODES, run
from .iocost import MemoryModel
from .planner import InfeasibleJobError, RetrainJob, greedy_fuse
from .report import write_report
from .scheduler import SchedulerConfig, cost_group
from .sketches import GaussianSketch
from .workload import generate_events, read_trace, write_trace

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2
TARGET_MARGIN = 0.08

log = logging.getLogger("coevo")


def _seed_range(text: str) -> range:
    lo, sep, hi = text.partition("..")
    try:
        a = int(lo)
        b = int(hi) if sep else a
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected A..B, got {text!r}") from None
    if b < a:
        raise argparse.ArgumentTypeError(f"empty seed range {text!r}")
    return range(a, b + 1)


def cmd_simulate(args) -> int:
    cfg = parse_config(args.config)
    events = None
    seed = args.seed
    if args.trace:
        trace_seed, events = read_trace(args.trace)
        seed = trace_seed if seed is None else seed
    report, records = run(cfg, args.mode, seed, events)
    write_report(report, args.out, records)
    print(f"{args.mode}: lowest_acc={report.lowest_acc} mean_acc={report.mean_acc} "
          f"requests={report.request_count} gpu_seconds={report.gpu_seconds:.1f}")
    return EXIT_OK


def cmd_gen_trace(args) -> int:
    cfg = parse_config(args.config)
    seed = cfg.seed if args.seed is None else args.seed
    write_trace(generate_events(cfg, seed), args.out, seed)
    return EXIT_OK


def plan_snapshot(snap) -> dict:
    batches = {b.batch_id: SimpleNamespace(batch_id=b.batch_id, sketch=GaussianSketch(b.mean, b.std, b.count))
               for b in snap.batches}
    jobs = [RetrainJob(j.job_id, j.task_id, j.backbone_family, tuple(j.flops_per_block), j.epochs,
                       tuple(j.dataset), j.mem_model_mb, j.mem_act_mb, d_block=j.d_block) for j in snap.jobs]
    m = snap.memory
    cfg = SchedulerConfig(
        overhead_mflop=snap.overhead_mflop, adapter_dim=snap.adapter_dim,
        insertion_points=tuple(snap.insertion_points) if snap.insertion_points else None,
        memory=MemoryModel(m.fast_capacity_slots, m.transfer_cost_mflopeq, m.reuse_ratio or 0.0, m.sim_threshold),
        derive_reuse_ratio=m.reuse_ratio is None, throughput_mflops=snap.throughput_mflops,
    )
    groups = greedy_fuse(jobs, snap.gpu_mem_mb, cfg.overhead_mflop, cfg.adapter_dim, cfg.insertion_points)
    out = []
    for g in groups:
        order, cost = cost_group(g, batches, cfg)
        d = g.to_dict()
        d.update(order=list(order), hits=cost.hits, misses=cost.misses, mflopeq=cost.mflopeq,
                 gpu_seconds=cost.gpu_seconds)
        out.append(d)
    return {"groups": out}


def cmd_plan(args) -> int:
    snap = parse_snapshot(args.snapshot)
    try:
        result = plan_snapshot(snap)
    except InfeasibleJobError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    Path(args.out).write_text(canonical_json(result))
    return EXIT_OK


def _sweep_one(cfg, seed):
    co, _ = run(cfg, "coevolve", seed)
    ind, _ = run(cfg, "independent", seed)
    return {
        "seed": seed,
        "coevolve_lowest": co.lowest_acc,
        "independent_lowest": ind.lowest_acc,
        "margin": co.lowest_acc - ind.lowest_acc,
        "coevolve_gpu_seconds": co.gpu_seconds,
        "independent_gpu_seconds": ind.gpu_seconds,
        "coevolve_bytes": co.bytes_uploaded,
        "independent_bytes": ind.bytes_uploaded,
    }


def cmd_sweep(args) -> int:
    cfg = parse_config(args.config)
    seeds = list(args.seeds)
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as ex:
            rows = list(ex.map(_sweep_one, [cfg] * len(seeds), seeds))
    else:
        rows = [_sweep_one(cfg, s) for s in seeds]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = {
        "rows": rows,
        "target_margin": TARGET_MARGIN,
        "seeds_meeting_target": sum(r["margin"] >= TARGET_MARGIN for r in rows),
    }
    (out / "sweep.json").write_text(canonical_json(summary))
    with open(out / "sweep.csv", "w") as f:
        f.write("seed,coevolve_lowest,independent_lowest,margin\n")
        for r in rows:
            f.write(f"{r['seed']},{r['coevolve_lowest']!r},{r['independent_lowest']!r},{r['margin']!r}\n")
    for r in rows:
        print(f"seed {r['seed']}: margin {r['margin']:+.4f}")
    print(f"{summary['seeds_meeting_target']}/{len(rows)} seeds reach a margin of {TARGET_MARGIN}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="coevo", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run one scenario in one mode")
    s.add_argument("--config", required=True)
    s.add_argument("--trace", help="replay a JSONL trace instead of generating the workload")
    s.add_argument("--mode", choices=MODES, default="coevolve")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    g = sub.add_parser("gen-trace", help="write the seeded workload as JSONL")
    g.add_argument("--config", required=True)
    g.add_argument("--seed", type=int)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_trace)

    pl = sub.add_parser("plan", help="fuse a pending-job snapshot into groups")
    pl.add_argument("--snapshot", required=True)
    pl.add_argument("--out", required=True)
    pl.set_defaults(func=cmd_plan)

    sw = sub.add_parser("sweep", help="compare both modes over a seed range")
    sw.add_argument("--config", required=True)
    sw.add_argument("--seeds", type=_seed_range, required=True, help="inclusive range A..B")
    sw.add_argument("--out", required=True)
    sw.add_argument("--jobs", type=int, default=1)
    sw.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError, RuntimeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
