"""Linear X->Y surrogates of remote task models, shareable as d+1 numbers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sketches import DimensionError


@dataclass(frozen=True, eq=False)
class MappingProxy:
    task_id: str
    version: int
    weights: np.ndarray
    bias: float

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", float(self.bias))

    def __eq__(self, other):
        if not isinstance(other, MappingProxy):
            return NotImplemented
        return (
            self.task_id == other.task_id
            and self.version == other.version
            and self.bias == other.bias
            and np.array_equal(self.weights, other.weights)
        )

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "version": self.version,
            "weights": self.weights.tolist(),
            "bias": self.bias,
        }

    @classmethod
    def from_dict(cls, d: dict) -> MappingProxy:
        return cls(d["task_id"], int(d["version"]), np.array(d["weights"], dtype=float), d["bias"])


def _predict_all(weights, bias, x):
    # same reduction as the per-sample path so boundary points agree bit for bit
    return np.where((x * weights).sum(axis=1) + bias >= 0.0, 1, -1)


def fit_proxy(samples, labels, max_epochs: int, task_id: str = "", previous: MappingProxy | None = None) -> MappingProxy:
    """Perceptron fit (unit learning rate, index order) from a zero start.

    Stops after the first full pass with no mistakes. ``previous`` only
    determines the version number; the fit itself never warm-starts, so equal
    inputs always give equal weights.
    """
    x = np.asarray(samples, dtype=float)
    y = np.asarray(labels).reshape(-1)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("empty batch")
    if y.size != x.shape[0]:
        raise ValueError(f"{y.size} labels for {x.shape[0]} samples")
    if max_epochs < 1:
        raise ValueError("max_epochs must be positive")
    w = np.zeros(x.shape[1])
    b = 0.0
    for _ in range(max_epochs):
        mistakes = 0
        for xi, yi in zip(x, y):
            pred = 1 if float((xi * w).sum()) + b >= 0.0 else -1
            if pred != yi:
                w = w + yi * xi
                b += yi
                mistakes += 1
        if mistakes == 0:
            break
    version = previous.version + 1 if previous is not None else 1
    return MappingProxy(task_id or (previous.task_id if previous else ""), version, w, b)


def predict_proxy(proxy: MappingProxy, x) -> int:
    v = np.asarray(x, dtype=float).reshape(-1)
    if v.size != proxy.weights.size:
        raise DimensionError(f"dimension mismatch: {v.size} vs {proxy.weights.size}")
    return 1 if float((v * proxy.weights).sum()) + proxy.bias >= 0.0 else -1


def proxy_disagreement(proxy: MappingProxy, batch) -> float:
    """Fraction of ``batch`` samples whose label the proxy gets wrong."""
    x = np.asarray(batch.samples, dtype=float)
    y = np.asarray(batch.labels).reshape(-1)
    if x.shape[0] == 0:
        raise ValueError("empty batch")
    if x.shape[1] != proxy.weights.size:
        raise DimensionError(f"dimension mismatch: {x.shape[1]} vs {proxy.weights.size}")
    return float(np.mean(_predict_all(proxy.weights, proxy.bias, x) != y))
