"""Utility functions shared by the laboratory modules"""

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from functools import lru_cache
from itertools import combinations
from typing import Callable, List, Optional, Sequence, Tuple, TypeVar

import numpy as np
from scipy import stats

logger = logging.getLogger(__name__)

T = TypeVar("T")


@lru_cache(maxsize=64)
def normal_quantile(confidence: float) -> float:
    """Two-sided normal quantile, e.g. 1.959964 for confidence 0.95."""
    return float(stats.norm.ppf(0.5 + confidence / 2.0))


@lru_cache(maxsize=256)
def student_quantile(confidence: float, dof: int) -> float:
    """Two-sided Student t quantile with `dof` degrees of freedom."""
    return float(stats.t.ppf(0.5 + confidence / 2.0, dof))


def torus_difference(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """
    Shortest representative of x - y in [-1/2, 1/2]^d.

    Args:
        x, y: Arrays of torus coordinates (broadcast over leading axes)

    Returns:
        Componentwise difference reduced to the fundamental domain
    """
    diff = np.mod(np.asarray(x, dtype=float) - np.asarray(y, dtype=float), 1.0)
    return np.where(diff > 0.5, diff - 1.0, diff)


def torus_distance(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """
    Quotient Euclidean distance on T^d = R^d / Z^d.
    Minimum over integer lifts, computed componentwise.

    Args:
        x, y: Arrays of shape (..., d)

    Returns:
        Distances of shape (...)
    """
    return np.linalg.norm(torus_difference(x, y), axis=-1)


def wedge_norm(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Norm of u ∧ v from the 2x2 minors, accurate for nearly parallel vectors."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    d = u.shape[-1]
    total = np.zeros(np.broadcast_shapes(u.shape[:-1], v.shape[:-1]))
    for i, j in _pairs(d):
        minor = u[..., i] * v[..., j] - u[..., j] * v[..., i]
        total = total + minor * minor
    return np.sqrt(total)


def projective_distance(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """
    Distance between lines Ru and Rv: ||u ∧ v|| / (||u|| ||v||).
    Always in [0, 1].
    """
    nu = np.linalg.norm(u, axis=-1)
    nv = np.linalg.norm(v, axis=-1)
    return np.clip(wedge_norm(u, v) / (nu * nv), 0.0, 1.0)


@lru_cache(maxsize=32)
def _pairs(d: int) -> Tuple[Tuple[int, int], ...]:
    return tuple(combinations(range(d), 2))


@lru_cache(maxsize=64)
def wedge_index(d: int, k: int) -> Tuple[Tuple[int, ...], ...]:
    """Lexicographic basis of ∧^k R^d as index tuples."""
    return tuple(combinations(range(d), k))


def wedge_power(matrix: np.ndarray, k: int) -> np.ndarray:
    """
    Matrix of ∧^k g in the lexicographic basis: entries are k×k minors.

    Args:
        matrix: Square matrix g (or stack of matrices, shape (..., d, d))
        k: Exterior power, 1 <= k <= d

    Returns:
        Array of shape (..., C(d,k), C(d,k))
    """
    g = np.asarray(matrix, dtype=float)
    d = g.shape[-1]
    if k == 1:
        return g.copy()
    basis = wedge_index(d, k)
    size = len(basis)
    out = np.empty(g.shape[:-2] + (size, size))
    for a, rows in enumerate(basis):
        for b, cols in enumerate(basis):
            out[..., a, b] = np.linalg.det(g[..., rows, :][..., :, cols])
    return out


def wilson_interval(successes: float, trials: float, confidence: float = 0.95) -> Tuple[float, float]:
    """
    Wilson score interval for a binomial proportion.

    Args:
        successes: Number of successes
        trials: Number of trials
        confidence: Two-sided confidence level

    Returns:
        (lower, upper); (0, 1) when there are no trials
    """
    if trials <= 0:
        return 0.0, 1.0
    z = normal_quantile(confidence)
    p = successes / trials
    denom = 1.0 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def mean_confidence_interval(values: Sequence[float], confidence: float = 0.95) -> Tuple[float, float, float]:
    """
    Sample mean with a Student t confidence interval.

    Returns:
        (mean, lower, upper); the interval collapses to the mean for constant samples
    """
    arr = np.asarray(values, dtype=float)
    mean = float(arr.mean())
    if arr.size < 2:
        return mean, mean, mean
    sem = float(arr.std(ddof=1)) / math.sqrt(arr.size)
    half = student_quantile(confidence, arr.size - 1) * sem
    return mean, mean - half, mean + half


def loglog_slope(x: Sequence[float], y: Sequence[float]) -> float:
    """Least-squares slope of log y against log x over the positive entries."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    mask = (x > 0) & (y > 0)
    if mask.sum() < 2:
        return float("nan")
    slope, _ = np.polyfit(np.log(x[mask]), np.log(y[mask]), 1)
    return float(slope)


def stream_rng(seed: int, *keys: int) -> np.random.Generator:
    """Generator for the stream (seed, *keys); distinct keys give independent streams."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1)] + [int(k) for k in keys]))


def replica_rng(seed: int, index: int) -> np.random.Generator:
    """Independent generator for replica `index` of a computation seeded with `seed`."""
    return stream_rng(seed, index)


def default_workers() -> int:
    """Parallelism degree from STATIONARY_LAB_WORKERS or the core count."""
    value = os.getenv("STATIONARY_LAB_WORKERS")
    if value:
        return max(1, int(value))
    return os.cpu_count() or 1


def run_replicas(fn: Callable[[int, np.random.Generator], T],
                 seed: int,
                 replicas: int,
                 workers: Optional[int] = None) -> List[T]:
    """
    Run `fn(index, rng)` for every replica and return results in replica order.

    Streams depend only on (seed, index), so the result does not depend on
    the number of workers.

    Args:
        fn: Replica body
        seed: Experiment seed
        replicas: Number of replicas
        workers: Thread count (default: default_workers())

    Returns:
        List of replica results
    """
    workers = workers or default_workers()
    if workers <= 1 or replicas <= 1:
        return [fn(i, replica_rng(seed, i)) for i in range(replicas)]
    with ThreadPoolExecutor(max_workers=min(workers, replicas)) as pool:
        return list(pool.map(lambda i: fn(i, replica_rng(seed, i)), range(replicas)))


def split_counts(total: int, parts: int) -> List[int]:
    """Split `total` into `parts` near-equal nonnegative counts."""
    parts = max(1, min(parts, total)) if total > 0 else 1
    base, extra = divmod(total, parts)
    return [base + (1 if i < extra else 0) for i in range(parts)]
