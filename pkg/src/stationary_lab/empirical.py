"""
Empirical measures on T^d x R and the tests that stand in for the
classification: Weyl sums, atom detection, invariance of the real marginal
and convergence of pushforwards along a word.
"""

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .config import BUMP_CENTERS, BURN_IN, WEYL_KMAX
from .core_model import StateXT, TorusPoint, WalkConfig, Word, _int_matmul
from .exceptions import PreconditionError
from .utils import torus_distance

logger = logging.getLogger(__name__)


@dataclass
class EmpiricalMeasure:
    """
    Weighted samples (x_i, t_i, w_i) of T^d x R.

    Measures built from exact orbits also keep the exact points and
    Fraction weights in `exact_points` / `exact_weights`.
    """

    x: np.ndarray
    t: np.ndarray
    w: np.ndarray
    exact_points: Optional[Tuple[TorusPoint, ...]] = field(default=None, repr=False)
    exact_weights: Optional[Tuple[Fraction, ...]] = field(default=None, repr=False)

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(1, -1) if x.size else x.reshape(0, 1)
        self.x = x
        n = self.x.shape[0]
        self.t = np.zeros(n) if self.t is None else np.asarray(self.t, dtype=float).reshape(n)
        self.w = np.ones(n) if self.w is None else np.asarray(self.w, dtype=float).reshape(n)
        if np.any(self.w <= 0):
            raise PreconditionError("Weights must be positive")

    @classmethod
    def from_arrays(cls, x: np.ndarray, t: Optional[np.ndarray] = None,
                    w: Optional[np.ndarray] = None) -> "EmpiricalMeasure":
        return cls(np.asarray(x, dtype=float), t, w)

    @classmethod
    def from_states(cls, states: Sequence[StateXT], weights: Optional[Sequence[float]] = None) -> "EmpiricalMeasure":
        if not states:
            return cls.empty(1)
        x = np.array([s.x.as_array() for s in states])
        t = np.array([s.t for s in states])
        return cls(x, t, None if weights is None else np.asarray(weights, dtype=float))

    @classmethod
    def empty(cls, dim: int) -> "EmpiricalMeasure":
        return cls(np.zeros((0, dim)), np.zeros(0), np.zeros(0))

    @property
    def size(self) -> int:
        return len(self.w)

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    @property
    def total_weight(self) -> float:
        return float(self.w.sum())

    @property
    def samples(self) -> List[Tuple[StateXT, float]]:
        return [(StateXT(TorusPoint.from_floats(xi), float(ti)), float(wi))
                for xi, ti, wi in zip(self.x, self.t, self.w)]

    def normalized(self) -> "EmpiricalMeasure":
        return EmpiricalMeasure(self.x, self.t, self.w / self.total_weight, self.exact_points, self.exact_weights)


def trajectory_measure(states: Sequence[StateXT], burn_in: int = BURN_IN) -> EmpiricalMeasure:
    """Uniform weights on the states after the first `burn_in` steps."""
    if burn_in < 0:
        raise PreconditionError("burn_in must be nonnegative")
    return EmpiricalMeasure.from_states(list(states)[burn_in + 1:])


def weyl_sum(m: EmpiricalMeasure, k: Sequence[int]) -> complex:
    """
    Weighted average of exp(2 pi i k.x) over the torus coordinates.

    Args:
        m: Nonempty measure
        k: Integer frequency vector

    Returns:
        Complex Weyl sum; exactly 1 for k = 0
    """
    k = np.asarray(k, dtype=float)
    if m.size == 0:
        raise PreconditionError("Weyl sum of an empty measure")
    if k.shape != (m.dim,):
        raise PreconditionError(f"Frequency {k} does not match dimension {m.dim}")
    if not np.any(k):
        return complex(1.0)
    phases = np.exp(2j * np.pi * (m.x @ k))
    return complex(np.sum(m.w * phases) / m.total_weight)


def weyl_frequencies(dim: int, kmax: int = WEYL_KMAX) -> List[Tuple[int, ...]]:
    """All k in {-kmax..kmax}^d except 0."""
    return [k for k in product(range(-kmax, kmax + 1), repeat=dim) if any(k)]


def weyl_table(m: EmpiricalMeasure, kmax: int = WEYL_KMAX) -> pd.DataFrame:
    """Weyl sums over {-kmax..kmax}^d minus 0; columns k, re, im, abs."""
    rows = []
    for k in weyl_frequencies(m.dim, kmax):
        value = weyl_sum(m, k)
        rows.append({"k": ",".join(str(v) for v in k), "re": value.real, "im": value.imag, "abs": abs(value)})
    table = pd.DataFrame(rows, columns=["k", "re", "im", "abs"])
    if len(table):
        logger.info(f"Largest |Weyl sum| over {len(table)} frequencies: {table['abs'].max():.5f}")
    return table


def atom_detect(m: EmpiricalMeasure, radius: float, threshold: float) -> List[Tuple[np.ndarray, float]]:
    """
    Greedy clustering of the torus coordinates.

    The heaviest unassigned point seeds a cluster of everything within
    `radius` of it; clusters carrying at least `threshold` of the total
    mass are reported.

    Returns:
        List of (center, mass fraction), heaviest first
    """
    if radius <= 0:
        raise PreconditionError(f"radius must be positive, got {radius}")
    if m.size == 0:
        return []
    points, inverse = np.unique(m.x, axis=0, return_inverse=True)
    mass = np.bincount(inverse.ravel(), weights=m.w) / m.total_weight
    unassigned = np.ones(len(points), dtype=bool)
    atoms = []
    while unassigned.any():
        candidates = np.flatnonzero(unassigned)
        seed = candidates[np.argmax(mass[candidates])]
        members = candidates[torus_distance(points[candidates], points[seed]) <= radius]
        unassigned[members] = False
        cluster_mass = float(mass[members].sum())
        if cluster_mass >= threshold:
            atoms.append((points[seed].copy(), cluster_mass))
    atoms.sort(key=lambda a: -a[1])
    logger.debug(f"atom_detect: {len(atoms)} atoms at radius {radius}, threshold {threshold}")
    return atoms


def marginal_table(m: EmpiricalMeasure, shifts: Sequence[float], bins: int = 40,
                   window: Tuple[float, float] = (-20.0, 20.0),
                   chi_values: Optional[Sequence[float]] = None) -> pd.DataFrame:
    """
    L1 distance between the t-histogram on `window` and the histogram of
    t + shift, ignoring bins within |shift| of the window edges.

    Args:
        m: Measure
        shifts: Translations to test; must be chi values when `chi_values` is given
        bins: Number of bins on the window
        window: Histogram support
        chi_values: Allowed shifts

    Returns:
        DataFrame with columns shift, discrepancy
    """
    if chi_values is not None:
        bad = [s for s in shifts if s not in set(float(c) for c in chi_values)]
        if bad:
            raise PreconditionError(f"Shifts {bad} are not chi values of generators")
    lo, hi = window
    edges = np.linspace(lo, hi, bins + 1)
    base, _ = np.histogram(m.t, bins=edges, weights=m.w)
    total = base.sum()
    rows = []
    for s in shifts:
        shifted, _ = np.histogram(m.t + s, bins=edges, weights=m.w)
        interior = (edges[:-1] >= lo + abs(s)) & (edges[1:] <= hi - abs(s))
        diff = np.abs(base - shifted)[interior].sum()
        rows.append({"shift": float(s), "discrepancy": float(diff / total) if total > 0 else 0.0})
    return pd.DataFrame(rows, columns=["shift", "discrepancy"])


def real_marginal_invariance(m: EmpiricalMeasure, shifts: Sequence[float], bins: int = 40,
                             window: Tuple[float, float] = (-20.0, 20.0),
                             chi_values: Optional[Sequence[float]] = None) -> float:
    """Largest marginal_table discrepancy over `shifts`."""
    table = marginal_table(m, shifts, bins, window, chi_values)
    worst = float(table["discrepancy"].max()) if len(table) else 0.0
    logger.info(f"Real marginal invariance: max discrepancy {worst:.5f} over shifts {list(shifts)}")
    return worst


def probe_functions(dim: int, kmax: int = WEYL_KMAX,
                   centers: Sequence[float] = BUMP_CENTERS) -> List[Tuple[Tuple[int, ...], float]]:
    """Weyl characters crossed with triangular t-bumps of half-width 1."""
    return [(k, c) for k in weyl_frequencies(dim, kmax) for c in centers]


def evaluate_probes(x: np.ndarray, t: np.ndarray, w: np.ndarray,
                            functions: Sequence[Tuple[Tuple[int, ...], float]]) -> np.ndarray:
    """Weighted averages of exp(2 pi i k.x) max(0, 1 - |t - c|)."""
    freqs = np.array([f[0] for f in functions], dtype=float)
    centers = np.array([f[1] for f in functions])
    phases = np.exp(2j * np.pi * (x @ freqs.T))
    bumps = np.clip(1.0 - np.abs(t[:, None] - centers[None, :]), 0.0, None)
    return (w[:, None] * phases * bumps).sum(axis=0) / w.sum()


@dataclass
class PushforwardConvergence:
    """Test-function values of (b_1 ... b_n)_* m0 at each checkpoint."""

    checkpoints: List[int]
    values: np.ndarray
    table: pd.DataFrame


def pushforward_convergence(cfg: WalkConfig, m0: EmpiricalMeasure, word: Sequence[int],
                            checkpoints: Sequence[int], kmax: int = WEYL_KMAX) -> PushforwardConvergence:
    """
    Evaluate the test functions on (b_1 ... b_n)_* m0 at each checkpoint n.

    Prefix products are exact integer matrices, and the float samples are
    read as exact binary fractions, so g x mod 1 is computed exactly before
    rounding.

    Returns:
        PushforwardConvergence; the table has columns n, cauchy_diff (the
        largest change of any test function since the previous checkpoint)
    """
    letters = Word(tuple(word))
    letters.validate(cfg.n_generators)
    checkpoints = sorted(int(c) for c in checkpoints)
    if checkpoints and (checkpoints[0] < 0 or checkpoints[-1] > len(letters)):
        raise PreconditionError(f"Checkpoints must lie in [0, {len(letters)}]")
    if m0.size == 0:
        raise PreconditionError("pushforward_convergence needs a nonempty measure")
    functions = probe_functions(cfg.dim, kmax)
    exact_x = [[Fraction(float(v)) for v in row] for row in m0.x]
    identity = tuple(tuple(int(i == j) for j in range(cfg.dim)) for i in range(cfg.dim))
    prefix = identity
    chi_total = 0.0
    done = 0
    values = []
    for n in checkpoints:
        for letter in letters.letters[done:n]:
            prefix = _int_matmul(prefix, cfg.generators[letter].entries)
            chi_total += cfg.generators[letter].chi
        done = n
        moved = np.array([[float(sum((a * c for a, c in zip(row, x)), Fraction(0)) % 1) for row in prefix]
                          for x in exact_x])
        values.append(evaluate_probes(moved, m0.t + chi_total, m0.w, functions))
    values = np.array(values)
    cauchy = [float("nan")] + [float(np.max(np.abs(values[i] - values[i - 1]))) for i in range(1, len(values))]
    table = pd.DataFrame({"n": checkpoints, "cauchy_diff": cauchy})
    return PushforwardConvergence(checkpoints, values, table)
