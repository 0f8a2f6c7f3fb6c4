"""Diagonal-Gaussian summaries of data batches and distances between them."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EQ_TOL = 1e-9


class DimensionError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class GaussianSketch:
    """Mean, population std and sample count of a batch, per feature."""

    mean: np.ndarray
    std: np.ndarray
    count: int

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        std = np.asarray(self.std, dtype=float).reshape(-1)
        if mean.size < 1 or mean.shape != std.shape:
            raise DimensionError(f"mean/std shapes {mean.shape} and {std.shape} do not match")
        if np.any(std < 0):
            raise ValueError("std components must be >= 0")
        if int(self.count) < 1:
            raise ValueError("count must be >= 1")
        mean.setflags(write=False)
        std.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)
        object.__setattr__(self, "count", int(self.count))

    @property
    def dim(self) -> int:
        return self.mean.size

    def allclose(self, other: GaussianSketch, tol: float = EQ_TOL) -> bool:
        return (
            self.dim == other.dim
            and self.count == other.count
            and np.allclose(self.mean, other.mean, rtol=0, atol=tol)
            and np.allclose(self.std, other.std, rtol=0, atol=tol)
        )

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist(), "count": self.count}

    @classmethod
    def from_dict(cls, d: dict) -> GaussianSketch:
        return cls(np.array(d["mean"], dtype=float), np.array(d["std"], dtype=float), int(d["count"]))


@dataclass(frozen=True, eq=False)
class LabelHistogram:
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float).reshape(-1)
        if p.size < 1 or np.any(p < 0) or np.any(p > 1) or abs(p.sum() - 1.0) > EQ_TOL:
            raise ValueError(f"not a probability vector: {p}")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @classmethod
    def from_labels(cls, labels) -> LabelHistogram:
        """Histogram over the binary classes (-1, +1)."""
        y = np.asarray(labels).reshape(-1)
        if y.size == 0:
            raise ValueError("empty batch")
        pos = float(np.count_nonzero(y > 0)) / y.size
        return cls(np.array([1.0 - pos, pos]))


def sketch_from_samples(samples) -> GaussianSketch:
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x.reshape(1, -1)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("empty batch")
    if x.shape[1] == 0:
        raise DimensionError("samples must have at least one feature")
    return GaussianSketch(x.mean(axis=0), x.std(axis=0), x.shape[0])


def _check_dims(a: GaussianSketch, b: GaussianSketch):
    if a.dim != b.dim:
        raise DimensionError(f"dimension mismatch: {a.dim} vs {b.dim}")


def merge_sketches(a: GaussianSketch, b: GaussianSketch) -> GaussianSketch:
    """Exact pooled mean and population variance of the union of both sample sets."""
    _check_dims(a, b)
    n = a.count + b.count
    wa, wb = a.count / n, b.count / n
    mean = wa * a.mean + wb * b.mean
    # within-group + between-group decomposition of the pooled second moment
    var = wa * a.std**2 + wb * b.std**2 + wa * wb * (a.mean - b.mean) ** 2
    return GaussianSketch(mean, np.sqrt(np.maximum(var, 0.0)), n)


def merge_all(sketches) -> GaussianSketch:
    it = iter(sketches)
    try:
        acc = next(it)
    except StopIteration:
        raise ValueError("no sketches to merge") from None
    for s in it:
        acc = merge_sketches(acc, s)
    return acc


def w2_distance(a: GaussianSketch, b: GaussianSketch) -> float:
    """Closed-form 2-Wasserstein distance between axis-aligned Gaussians."""
    _check_dims(a, b)
    return float(np.sqrt(np.sum((a.mean - b.mean) ** 2) + np.sum((a.std - b.std) ** 2)))


def tv_distance(p: LabelHistogram, q: LabelHistogram) -> float:
    if p.probs.size != q.probs.size:
        raise DimensionError(f"class-count mismatch: {p.probs.size} vs {q.probs.size}")
    return float(0.5 * np.abs(p.probs - q.probs).sum())
