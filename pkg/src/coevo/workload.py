"""Synthetic non-IID workload: seeded data arrivals per client plus drift events.

The stream is fully materialized before simulation, so a live run and a
replay of its JSONL trace see byte-identical inputs.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .config import SimConfig

STREAM_CLIENT_BASE = 1000


def stream_rng(seed: int, stream_id: int) -> np.random.Generator:
    """Independent generator for one stream; sub-seed is seed XOR stream id."""
    return np.random.default_rng((seed ^ stream_id) & 0xFFFFFFFFFFFFFFFF)


def domain_at(dom, t: float) -> dict:
    """Domain parameters in force at time ``t`` (events at exactly ``t`` included)."""
    state = {"mean": list(dom.mean), "std": list(dom.std), "weights": list(dom.weights), "bias": dom.bias}
    for ev in dom.drift_schedule:
        if ev.t > t:
            break
        for k in ("mean", "std", "weights", "bias"):
            if getattr(ev, k) is not None:
                state[k] = getattr(ev, k)
    return state


def observation(dom_state: dict, client) -> tuple[np.ndarray, np.ndarray]:
    """Mean and std of what this client's sensor actually sees of the domain."""
    mean = np.asarray(dom_state["mean"], float) + np.asarray(client.view_offset, float)
    std = np.asarray(dom_state["std"], float) * np.asarray(client.view_scale, float)
    return mean, std


def label(x: np.ndarray, weights, bias: float) -> np.ndarray:
    w = np.asarray(weights, float)
    return np.where((x * w).sum(axis=1) + bias >= 0.0, 1, -1)


def generate_events(cfg: SimConfig, seed: int) -> list[dict]:
    events = []
    for dom in cfg.domains:
        for k, ev in enumerate(dom.drift_schedule):
            if ev.t <= cfg.duration_s:
                events.append({
                    "type": "drift", "t": float(ev.t), "task": dom.task, "index": k, "drop": ev.drop,
                    "mean": ev.mean, "std": ev.std, "weights": ev.weights, "bias": ev.bias,
                })
    domains = {d.task: d for d in cfg.domains}
    for ci, c in enumerate(cfg.clients):
        if c.arrival_rate_hz <= 0:
            continue
        rng = stream_rng(seed, STREAM_CLIENT_BASE + ci)
        period = 1.0 / c.arrival_rate_hz
        for k in range(1, math.floor(cfg.duration_s * c.arrival_rate_hz + 1e-9) + 1):
            t = k * period
            st = domain_at(domains[c.task], t)
            mean, std = observation(st, c)
            x = rng.normal(mean, std, size=(c.batch_size, cfg.feature_dim))
            events.append({
                "type": "arrival", "t": t, "client": c.id, "batch_id": f"{c.id}-{k:05d}",
                "samples": x.tolist(), "labels": label(x, st["weights"], st["bias"]).tolist(),
                "bytes": c.bytes_per_sample * c.batch_size,
            })
    # drifts before arrivals at equal times; then client order
    kind = {"drift": 0, "arrival": 1}
    events.sort(key=lambda e: (e["t"], kind[e["type"]], e.get("task", ""), e.get("client", "")))
    return events


def write_trace(events, path, seed: int) -> None:
    try:
        with open(path, "w") as f:
            f.write(json.dumps({"type": "header", "seed": seed, "format": 1}, sort_keys=True) + "\n")
            for e in events:
                f.write(json.dumps(e, sort_keys=True) + "\n")
    except OSError as e:
        raise OSError(f"cannot write trace {str(path)!r}: {e.strerror}") from e


def read_trace(path) -> tuple[int | None, list[dict]]:
    seed = None
    events = []
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        rec = json.loads(line)
        if rec.get("type") == "header":
            seed = rec.get("seed")
        elif rec.get("type") in ("arrival", "drift"):
            events.append(rec)
        else:
            raise ValueError(f"{path}:{n}: unexpected record type {rec.get('type')!r}")
    return seed, events
