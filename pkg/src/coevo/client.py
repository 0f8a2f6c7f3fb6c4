"""Client-side logic: accuracy profiling, shift typing and budgeted resampling."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .proxy import MappingProxy, proxy_disagreement
from .sketches import (
    GaussianSketch,
    LabelHistogram,
    merge_all,
    sketch_from_samples,
    tv_distance,
    w2_distance,
)

KB = 1024
_TIE = 1e-12


@dataclass(frozen=True, eq=False)
class DataBatch:
    batch_id: str
    samples: np.ndarray
    labels: np.ndarray
    bytes: int
    sketch: GaussianSketch
    label_hist: LabelHistogram
    origin_client: str

    @property
    def samples_count(self) -> int:
        return int(self.samples.shape[0])


def make_batch(batch_id: str, samples, labels, origin_client: str, nbytes: int | None = None) -> DataBatch:
    """Build a batch, deriving its sketch and label histogram.

    ``nbytes`` defaults to 8 bytes per stored number (samples plus labels).
    """
    x = np.asarray(samples, dtype=float)
    y = np.asarray(labels, dtype=int).reshape(-1)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("empty batch")
    if y.size != x.shape[0]:
        raise ValueError(f"{y.size} labels for {x.shape[0]} samples")
    if nbytes is None:
        nbytes = 8 * (x.size + y.size)
    if nbytes < 1:
        raise ValueError("bytes must be >= 1")
    return DataBatch(batch_id, x, y, int(nbytes), sketch_from_samples(x), LabelHistogram.from_labels(y), origin_client)


class ShiftClass(str, Enum):
    NO_DRIFT = "NoDrift"
    COVARIATE = "CovariateShift"
    LABEL = "LabelShift"
    HYBRID = "HybridShift"
    CONCEPT = "ConceptDrift"


@dataclass(frozen=True)
class Thresholds:
    acc: float = 0.05
    feat: float = 0.5
    label: float = 0.2


@dataclass(frozen=True)
class DriftReport:
    delta_acc: float
    feat_dist: float
    label_dist: float
    shift_class: ShiftClass

    def to_dict(self) -> dict:
        return {
            "delta_acc": self.delta_acc,
            "feat_dist": self.feat_dist,
            "label_dist": self.label_dist,
            "shift_class": self.shift_class.value,
        }


@dataclass(frozen=True)
class EvolutionRequest:
    request_id: str
    client_id: str
    task_id: str
    t_arrival: float
    drift: DriftReport
    manifest: tuple[str, ...]
    bytes_total: int
    t_emit: float = 0.0

    def to_record(self) -> dict:
        return {
            "type": "request",
            "t": self.t_emit,
            "id": self.request_id,
            "client": self.client_id,
            "task": self.task_id,
            "drift": self.drift.to_dict(),
            "manifest": list(self.manifest),
            "bytes": self.bytes_total,
            "t_arrival": self.t_arrival,
        }


def profile_accuracy(window) -> float:
    flags = list(window)
    if not flags:
        raise ValueError("empty window")
    return sum(1.0 if f else 0.0 for f in flags) / len(flags)


def classify_shift(delta_acc: float, feat_dist: float, label_dist: float, thresholds: Thresholds = Thresholds()) -> ShiftClass:
    if delta_acc <= thresholds.acc:
        return ShiftClass.NO_DRIFT
    feat = feat_dist > thresholds.feat
    label = label_dist > thresholds.label
    if feat and not label:
        return ShiftClass.COVARIATE
    if label and not feat:
        return ShiftClass.LABEL
    if feat and label:
        return ShiftClass.HYBRID
    return ShiftClass.CONCEPT


def _saturate(w: float) -> float:
    return 1.0 if math.isinf(w) else w / (1.0 + w)


def explicit_utility(batch: DataBatch, train_sketch: GaussianSketch, own_proxy: MappingProxy,
                     alpha: float = 0.5, beta: float = 0.5) -> float:
    """Predicted value of ``batch`` to the local model: novelty plus proxy uncertainty."""
    novelty = _saturate(w2_distance(batch.sketch, train_sketch))
    return alpha * novelty + beta * proxy_disagreement(own_proxy, batch)


def implicit_complementarity(batch: DataBatch, remote_sketch: GaussianSketch, remote_proxy: MappingProxy,
                             gamma: float = 0.5) -> float:
    """Predicted value of ``batch`` to a remote task, from its published sketch and proxy."""
    coverage = _saturate(w2_distance(batch.sketch, remote_sketch))
    return gamma * coverage + (1.0 - gamma) * proxy_disagreement(remote_proxy, batch)


def resample_budget(batches, budget_bytes: int) -> list[str]:
    """0/1 knapsack over (batch, score) pairs with costs quantized to whole KB.

    Among optimal selections the lexicographically smallest sorted id list
    wins. Returns the selected ids in ascending order.
    """
    items = sorted(((b.batch_id, max(0, -(-b.bytes // KB)), float(s)) for b, s in batches), key=lambda t: t[0])
    if any(s < 0 for _, _, s in items):
        raise ValueError("scores must be >= 0")
    cap = max(0, int(budget_bytes)) // KB
    n = len(items)
    if n == 0 or cap == 0:
        return []
    # best[i][c]: optimum over the suffix items[i:] with capacity c
    best = np.zeros((n + 1, cap + 1))
    for i in range(n - 1, -1, -1):
        _, w, s = items[i]
        best[i] = best[i + 1]
        if w <= cap:
            cand = best[i + 1][: cap + 1 - w] + s
            best[i][w:] = np.maximum(best[i + 1][w:], cand)
    chosen = []
    c = cap
    for i, (bid, w, s) in enumerate(items):
        if best[i][c] <= _TIE:
            break
        if w <= c and s + best[i + 1][c - w] >= best[i][c] - _TIE:
            chosen.append(bid)
            c -= w
    return chosen


@dataclass
class ClientAgent:
    """Mutable per-client state driven by the simulator.

    Correctness flags are produced by a deterministic credit accumulator, so
    the windowed accuracy tracks the true accuracy to within one flag.
    """

    client_id: str
    task_id: str
    window: int
    thresholds: Thresholds
    reference_acc: float
    budget_bytes: int
    train_sketch: GaussianSketch
    train_hist: LabelHistogram
    proxy: MappingProxy
    recent_batches: int = 5
    buffer_batches: int = 16
    flags: deque = field(init=False)
    recent: deque = field(init=False)
    buffer: deque = field(init=False)
    credit: float = 0.0
    outstanding: str | None = None
    n_requests: int = 0

    def __post_init__(self):
        self.flags = deque(maxlen=self.window)
        self.recent = deque(maxlen=max(1, self.recent_batches))
        self.buffer = deque(maxlen=max(1, self.buffer_batches))

    def observe(self, batch: DataBatch, current_acc: float) -> None:
        for _ in range(batch.samples_count):
            self.credit += current_acc
            if self.credit >= 1.0 - 1e-12:
                self.credit -= 1.0
                self.flags.append(True)
            else:
                self.flags.append(False)
        self.recent.append(batch)
        self.buffer.append(batch)

    def recent_sketch(self) -> GaussianSketch:
        return merge_all(b.sketch for b in self.recent) if self.recent else self.train_sketch

    def drift_report(self) -> DriftReport | None:
        """None until the accuracy window is full."""
        if len(self.flags) < self.window:
            return None
        delta = self.reference_acc - profile_accuracy(self.flags)
        feat = w2_distance(self.recent_sketch(), self.train_sketch)
        hist = LabelHistogram(np.mean([b.label_hist.probs for b in self.recent], axis=0)
                              if self.recent else self.train_hist.probs)
        label = tv_distance(hist, self.train_hist)
        return DriftReport(delta, feat, label, classify_shift(delta, feat, label, self.thresholds))

    def score_buffer(self, remotes: dict, share_min: float):
        """Combined upload score per buffered batch plus the tasks each batch should feed.

        ``remotes`` maps remote task id -> (published sketch, published proxy);
        pass an empty dict to score for local use only.
        """
        scored, targets = [], {}
        for b in self.buffer:
            own = explicit_utility(b, self.train_sketch, self.proxy)
            best = own
            tgt = [self.task_id]
            for task, (sk, px) in sorted(remotes.items()):
                imp = implicit_complementarity(b, sk, px)
                best = max(best, imp)
                if imp >= share_min:
                    tgt.append(task)
            scored.append((b, best))
            targets[b.batch_id] = tuple(tgt)
        return scored, targets

    def make_request(self, t: float, report: DriftReport, remotes: dict, share_min: float, transfer):
        """Select the upload manifest and emit a request; clears the upload buffer.

        Returns ``(None, [], {})`` and changes nothing when no batch is worth
        uploading within the budget.
        """
        scored, targets = self.score_buffer(remotes, share_min)
        manifest = resample_budget(scored, self.budget_bytes)
        if not manifest:
            return None, [], {}
        by_id = {b.batch_id: b for b in self.buffer}
        chosen = [by_id[i] for i in manifest]
        nbytes = sum(b.bytes for b in chosen)
        self.n_requests += 1
        req = EvolutionRequest(
            request_id=f"{self.client_id}-r{self.n_requests:04d}",
            client_id=self.client_id,
            task_id=self.task_id,
            t_arrival=t + transfer(nbytes),
            drift=report,
            manifest=tuple(manifest),
            bytes_total=nbytes,
            t_emit=t,
        )
        self.buffer.clear()
        self.outstanding = req.request_id
        return req, chosen, {i: targets[i] for i in manifest}

    def on_retrained(self, train_sketch: GaussianSketch, train_hist: LabelHistogram, proxy: MappingProxy) -> None:
        self.train_sketch = train_sketch
        self.train_hist = train_hist
        self.proxy = proxy
        self.flags.clear()
        self.credit = 0.0
        self.outstanding = None
