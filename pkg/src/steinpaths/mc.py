"""Deterministic parallel Monte Carlo engine.

Streaming mean/variance accumulation (Welford), mergeable across chunks,
with a splittable counter-based RNG: numpy's Philox keyed by
(root seed, stream path) via SeedSequence spawn keys.  Work is split into
fixed-size chunks whose substreams depend only on the chunk index, and
chunk results are merged in index order, so the final numbers are
bit-identical for any worker count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "McError",
    "McEstimate",
    "accumulate",
    "merge",
    "ci95",
    "from_values",
    "SeedSpec",
    "mc_run",
    "mc_run_vector",
    "CHUNK",
]

CHUNK = 4096  # samples per task; fixed so results do not depend on workers
Z95 = 1.96


class McError(ValueError):
    pass


@dataclass
class McEstimate:
    """Streaming first/second moment accumulator.

    count -- number of samples
    mean  -- running mean
    m2    -- sum of squared deviations from the mean
    """

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0
    name: str = field(default="", compare=False)

    @property
    def variance(self) -> float:
        if self.count < 2:
            return 0.0
        return self.m2 / (self.count - 1)

    @property
    def stderr(self) -> float:
        if self.count < 2:
            return 0.0
        return float(np.sqrt(self.variance / self.count))

    def add(self, x: float) -> None:
        x = float(x)
        if not np.isfinite(x):
            raise McError("non-finite sample %r" % x)
        self.count += 1
        delta = x - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (x - self.mean)

    def add_batch(self, xs: np.ndarray) -> None:
        xs = np.asarray(xs, dtype=float).ravel()
        if xs.size == 0:
            return
        if not np.all(np.isfinite(xs)):
            raise McError("non-finite sample in batch")
        other = McEstimate(
            count=int(xs.size),
            mean=float(np.mean(xs)),
            m2=float(np.sum((xs - np.mean(xs)) ** 2)),
        )
        merged = merge(self, other)
        self.count, self.mean, self.m2 = merged.count, merged.mean, merged.m2

    def ci95(self) -> tuple[float, float]:
        return ci95(self)

    def to_dict(self) -> dict:
        lo, hi = (self.ci95() if self.count >= 2 else (self.mean, self.mean))
        return {
            "name": self.name,
            "count": self.count,
            "value": self.mean,
            "stderr": self.stderr,
            "ci95": [lo, hi],
        }


def accumulate(est: McEstimate, x: float) -> McEstimate:
    """Welford update; returns a new estimate (the input is not mutated)."""
    out = McEstimate(est.count, est.mean, est.m2, est.name)
    out.add(x)
    return out


def merge(a: McEstimate, b: McEstimate) -> McEstimate:
    """Combine two disjoint accumulations (Chan's parallel update)."""
    if a.count == 0:
        return McEstimate(b.count, b.mean, b.m2, a.name or b.name)
    if b.count == 0:
        return McEstimate(a.count, a.mean, a.m2, a.name or b.name)
    n = a.count + b.count
    delta = b.mean - a.mean
    mean = a.mean + delta * (b.count / n)
    m2 = a.m2 + b.m2 + delta * delta * (a.count * b.count / n)
    return McEstimate(n, mean, m2, a.name or b.name)


def ci95(est: McEstimate) -> tuple[float, float]:
    """mean +/- 1.96 stderr; needs at least two samples."""
    if est.count < 2:
        raise McError("ci95 needs count >= 2, have %d" % est.count)
    half = Z95 * est.stderr
    return est.mean - half, est.mean + half


def from_values(xs, name: str = "") -> McEstimate:
    est = McEstimate(name=name)
    est.add_batch(np.asarray(xs, dtype=float))
    return est


@dataclass(frozen=True)
class SeedSpec:
    """Root seed plus a stream path of task indices.

    Distinct paths give statistically independent Philox substreams; the
    same (root, path) reproduces the identical sample sequence.
    """

    root: int
    path: tuple = ()

    def child(self, *indices: int) -> "SeedSpec":
        return SeedSpec(self.root, self.path + tuple(int(i) for i in indices))

    def rng(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.root, spawn_key=self.path)
        return np.random.Generator(np.random.Philox(ss))


def _run_tasks(task, n_tasks: int, workers: int) -> list:
    if workers <= 1 or n_tasks <= 1:
        return [task(i) for i in range(n_tasks)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(task, range(n_tasks)))


def _chunk_sizes(n_samples: int, chunk: int) -> list[int]:
    sizes = [chunk] * (n_samples // chunk)
    if n_samples % chunk:
        sizes.append(n_samples % chunk)
    return sizes


def mc_run(
    sample_fn: Callable[[np.random.Generator, int], np.ndarray],
    n_samples: int,
    seed: SeedSpec,
    workers: int = 1,
    chunk: int = CHUNK,
    name: str = "",
) -> McEstimate:
    """Estimate E[X] where sample_fn(rng, size) draws size iid samples.

    Chunk i uses substream seed.child(i); chunk moments are merged in
    index order, so the result is independent of the worker count.
    """
    if n_samples < 1:
        raise McError("n_samples must be positive")
    sizes = _chunk_sizes(n_samples, chunk)

    def task(i: int):
        xs = np.asarray(sample_fn(seed.child(i).rng(), sizes[i]), dtype=float)
        if not np.all(np.isfinite(xs)):
            raise McError("non-finite sample in chunk %d" % i)
        mean = float(np.mean(xs))
        return McEstimate(int(xs.size), mean, float(np.sum((xs - mean) ** 2)))

    out = McEstimate(name=name)
    for part in _run_tasks(task, len(sizes), workers):
        out = merge(out, part)
    out.name = name
    return out


def mc_run_vector(
    sample_fn: Callable[[np.random.Generator, int], np.ndarray],
    n_samples: int,
    seed: SeedSpec,
    workers: int = 1,
    chunk: int = CHUNK,
) -> list[McEstimate]:
    """Componentwise estimates for sample_fn returning (size, d) arrays."""
    if n_samples < 1:
        raise McError("n_samples must be positive")
    sizes = _chunk_sizes(n_samples, chunk)

    def task(i: int):
        xs = np.asarray(sample_fn(seed.child(i).rng(), sizes[i]), dtype=float)
        xs = xs.reshape(xs.shape[0], -1)
        if not np.all(np.isfinite(xs)):
            raise McError("non-finite sample in chunk %d" % i)
        means = np.mean(xs, axis=0)
        m2s = np.sum((xs - means) ** 2, axis=0)
        return xs.shape[0], means, m2s

    parts = _run_tasks(task, len(sizes), workers)
    d = parts[0][1].size
    outs = [McEstimate() for _ in range(d)]
    for cnt, means, m2s in parts:
        for j in range(d):
            outs[j] = merge(outs[j], McEstimate(cnt, float(means[j]), float(m2s[j])))
    return outs
