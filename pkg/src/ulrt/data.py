"""Gaussian sampling, reproducible dataset splitting, and mean caching.

A :class:`SampleSet` is an immutable n-by-d matrix of observations with its
column mean cached; a :class:`SplitPair` is an index partition into the
likelihood-evaluation part (``indices0``) and the estimation part
(``indices1``), with both part means cached.

Splitting draws a uniformly random size-``round(n * p0)`` subset via a partial
Fisher-Yates shuffle.  All randomness flows through :class:`RngStream` values,
so identical streams reproduce identical datasets and partitions.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .rng import RngStream, _raw_block


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SampleSet:
    """An n-by-d matrix of observations with the column mean cached."""

    values: np.ndarray
    mean: np.ndarray

    @classmethod
    def from_values(cls, values: np.ndarray) -> "SampleSet":
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 2:
            raise DomainError(f"values must be a 2-d array, got shape {values.shape}")
        n, d = values.shape
        if n < 2 or d < 1:
            raise DomainError(f"need n >= 2 and d >= 1, got n={n}, d={d}")
        if not np.all(np.isfinite(values)):
            raise DomainError("values must be finite")
        return cls(values=_frozen(values), mean=_frozen(values.mean(axis=0)))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class SplitPair:
    """An index partition of a sample with both part means cached.

    ``p0`` is the requested proportion for the likelihood-evaluation part;
    the realized part size is ``round(n * p0)`` (half up), so ``m0 / n`` can
    differ from ``p0`` when ``n * p0`` is not an integer.
    """

    indices0: np.ndarray
    indices1: np.ndarray
    p0: float
    mean0: np.ndarray
    mean1: np.ndarray

    @classmethod
    def from_indices(
        cls, sample: SampleSet, indices0: np.ndarray, p0: float | None = None
    ) -> "SplitPair":
        indices0 = np.sort(np.asarray(indices0, dtype=np.int64))
        n = sample.n
        mask = np.zeros(n, dtype=bool)
        if indices0.size and (indices0[0] < 0 or indices0[-1] >= n):
            raise DomainError("indices0 out of range")
        mask[indices0] = True
        if mask.sum() != indices0.size:
            raise DomainError("indices0 contains duplicates")
        indices1 = np.nonzero(~mask)[0]
        if indices0.size < 1 or indices1.size < 1:
            raise DomainError("both parts of a split must be nonempty")
        return cls(
            indices0=_frozen(indices0),
            indices1=_frozen(indices1),
            p0=float(p0 if p0 is not None else indices0.size / n),
            mean0=_frozen(sample.values[indices0].mean(axis=0)),
            mean1=_frozen(sample.values[indices1].mean(axis=0)),
        )

    @property
    def m0(self) -> int:
        return self.indices0.size

    @property
    def m1(self) -> int:
        return self.indices1.size


def part_size(n: int, p0: float) -> int:
    """Realized size of the likelihood part: ``round(n * p0)``, half up.

    Half-up rounding puts the extra observation of an odd-sized sample at
    ``p0 = 0.5`` into the likelihood part.
    """
    if not (0.0 < p0 < 1.0):
        raise DomainError(f"p0 must lie in (0, 1), got {p0}")
    k = int(math.floor(n * p0 + 0.5))
    if k < 1 or k > n - 1:
        raise DomainError(f"split p0={p0} leaves an empty part for n={n}")
    return k


def sample_gaussian(n: int, d: int, theta, rng: RngStream) -> SampleSet:
    """``n`` iid draws from N(theta, I_d), deterministic given ``rng``."""
    if n < 2 or d < 1:
        raise DomainError(f"need n >= 2 and d >= 1, got n={n}, d={d}")
    theta = np.asarray(theta, dtype=np.float64).reshape(-1)
    if theta.shape != (d,):
        raise DomainError(f"theta must have length d={d}, got {theta.shape}")
    if not np.all(np.isfinite(theta)):
        raise DomainError("theta must be finite")
    values = rng.normals(n * d).reshape(n, d) + theta
    return SampleSet.from_values(values)


def _partial_fisher_yates(key: int, n: int, k: int) -> np.ndarray:
    """First ``k`` entries of a seeded partial Fisher-Yates shuffle of 0..n-1."""
    perm = np.arange(n, dtype=np.int64)
    draws = _raw_block(key, 0, k)
    for i in range(k):
        j = i + int(draws[i] % (n - i))
        perm[i], perm[j] = perm[j], perm[i]
    return perm[:k]


def split(sample: SampleSet, p0: float, rng: RngStream) -> SplitPair:
    """Uniformly random partition with ``|D0| = round(n * p0)``.

    Repeated calls with the same stream return the same partition.
    """
    k = part_size(sample.n, p0)
    indices0 = _partial_fisher_yates(rng.key, sample.n, k)
    return SplitPair.from_indices(sample, indices0, p0=p0)


def subsample_splits(sample: SampleSet, B: int, p0: float, rng: RngStream) -> list[SplitPair]:
    """``B`` independent splits, split ``b`` drawn from ``rng.substream(b)``."""
    if B < 1:
        raise DomainError(f"B must be at least 1, got {B}")
    from ._kernels import batch_fisher_yates

    n = sample.n
    k = part_size(n, p0)
    keys = rng.substream_keys(B)
    perms = batch_fisher_yates(keys, n, k)
    return [SplitPair.from_indices(sample, perms[b, :k], p0=p0) for b in range(B)]


def save_csv(sample: SampleSet, path) -> None:
    """Write one observation per row with header ``y1..yd``."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"y{j + 1}" for j in range(sample.d)])
        for row in sample.values:
            writer.writerow([repr(float(v)) for v in row])


def load_csv(path) -> SampleSet:
    """Read a sample written by :func:`save_csv` (or any ``y1..yd`` CSV)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or not all(h.strip().startswith("y") for h in header):
            raise DomainError(f"{path}: expected a header row y1..yd")
        rows = [[float(v) for v in row] for row in reader if row]
    if not rows:
        raise DomainError(f"{path}: no observations")
    return SampleSet.from_values(np.asarray(rows, dtype=np.float64))
