"""
The fibered system made concrete: words a of length n parameterize the
fiber of a base point c, windows W condition the fiber, and long products
along accepted words exhibit the law of angles and exponential drift.
"""

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats

from .cartan import (LogVector, batched_cocycle, batched_products, cartan_projection, cocycle_along,
                     density_points, lookahead_flag, theta_n)
from .config import DEFAULT_LOOKAHEAD, FIBER_BATCH, GAP_TOLERANCE, NORM_CONTROL_QUANTILE, WRAP_AROUND_LIMIT
from .core_model import StateXT, TorusPoint, WalkConfig, Word, _int_matmul
from .exceptions import GapError, PreconditionError
from .utils import projective_distance, stream_rng, wilson_interval

logger = logging.getLogger(__name__)

Interval = Tuple[float, float]

UNCONDITIONED_STREAM = 0x554E43
DIRECTION_STREAM = 0x444952
CALIBRATION_STREAM = 0x43414C
FIBER_STREAM = 0x464942


@dataclass
class BasePoint:
    """c = (b, z, sign, (x, t)): a long word, an a-vector, the O_1 sign and a state."""

    b_word: Word
    z: np.ndarray
    sign: int = 1
    state: Optional[StateXT] = None

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=float)
        if self.state is None:
            self.state = StateXT(TorusPoint.from_floats([0.0] * self.z.size), 0.0)
        if self.sign not in (1, -1):
            raise PreconditionError(f"sign must be +1 or -1, got {self.sign}")

    @classmethod
    def random(cls, cfg: WalkConfig, length: int, seed: int, z: Optional[Sequence[float]] = None,
               state: Optional[StateXT] = None) -> "BasePoint":
        letters = cfg.sample_letters(stream_rng(seed, FIBER_STREAM), length)
        state = state or StateXT(TorusPoint.from_floats([0.0] * cfg.dim), 0.0)
        return cls(Word(tuple(letters)), np.zeros(cfg.dim) if z is None else z, 1, state)

    def require_length(self, n: int, lookahead: int) -> None:
        if len(self.b_word) < n + lookahead:
            raise PreconditionError(f"Base word has length {len(self.b_word)}, need n + lookahead = {n + lookahead}")


@dataclass(frozen=True)
class WindowSpec:
    """
    W = {z in U} x {t in I}: U is a box on the first d - 1 a-coordinates
    (the last one is determined by the zero sum), I an interval for t.
    """

    U: Tuple[Interval, ...]
    I: Interval

    def __post_init__(self):
        object.__setattr__(self, "U", tuple((float(lo), float(hi)) for lo, hi in self.U))
        object.__setattr__(self, "I", (float(self.I[0]), float(self.I[1])))
        if any(hi <= lo for lo, hi in self.U) or self.I[1] <= self.I[0]:
            raise PreconditionError(f"Window {self} has empty interior")

    @classmethod
    def full(cls, dim: int) -> "WindowSpec":
        return cls(tuple((-math.inf, math.inf) for _ in range(dim - 1)), (-math.inf, math.inf))

    @classmethod
    def default(cls, dim: int) -> "WindowSpec":
        return cls(tuple((-1.0, 1.0) for _ in range(dim - 1)), (-1.5, 1.5))

    @property
    def bounded(self) -> bool:
        return all(math.isfinite(v) for interval in self.U + (self.I,) for v in interval)

    def validate_for(self, cfg: WalkConfig) -> None:
        """Every translate of I must meet chi(Gamma): |I| >= 1 + max |chi|."""
        if len(self.U) != cfg.dim - 1:
            raise PreconditionError(f"Window U has {len(self.U)} coordinates, expected {cfg.dim - 1}")
        if self.I[1] - self.I[0] < 1 + cfg.max_abs_chi:
            raise PreconditionError(f"Window I={self.I} is shorter than 1 + max|chi| = {1 + cfg.max_abs_chi}")

    def shrink(self, factor: float) -> "WindowSpec":
        """U scaled by `factor` about its center."""
        def scale(lo, hi):
            mid, half = (lo + hi) / 2, (hi - lo) / 2 * factor
            return mid - half, mid + half
        return WindowSpec(tuple(scale(lo, hi) for lo, hi in self.U), self.I)

    def contains(self, z: np.ndarray, t: np.ndarray) -> np.ndarray:
        z = np.atleast_2d(z)
        t = np.asarray(t, dtype=float)
        inside = (t >= self.I[0]) & (t <= self.I[1])
        for i, (lo, hi) in enumerate(self.U):
            inside = inside & (z[:, i] >= lo) & (z[:, i] <= hi)
        return inside


@dataclass
class FiberSample:
    a_word: Word
    theta_shift: np.ndarray
    chi_shift: float
    accepted: bool
    drift_vector: Optional[LogVector] = None


def fiber_point(cfg: WalkConfig, c: BasePoint, a: Sequence[int], n: int, W: WindowSpec,
                lookahead: int = DEFAULT_LOOKAHEAD) -> FiberSample:
    """
    The fiber element of c indexed by the word a.

    theta_shift = theta_n(a T^n b) - theta_n(b), both evaluated at the same
    lookahead flag of b_{n+1} ... b_{n+lookahead}; chi_shift = chi(a) - chi(b_1..b_n).

    Args:
        cfg: Walk configuration
        c: Base point
        a: Word of length n
        n: Fiber level
        W: Window deciding acceptance
        lookahead: Letters used for the tail flag

    Returns:
        FiberSample; the same-prefix word gives zero shifts exactly
    """
    a_word = Word(tuple(a))
    if len(a_word) != n:
        raise PreconditionError(f"Fiber word must have length n={n}, got {len(a_word)}")
    a_word.validate(cfg.n_generators)
    c.require_length(n, lookahead)
    if n == 0:
        theta_shift = np.zeros(cfg.dim)
        chi_shift = 0.0
    else:
        flag, _ = lookahead_flag(cfg, c.b_word.letters[n:n + lookahead], lookahead)
        theta_a, _ = cocycle_along(cfg.matrices[list(a_word.letters)], flag)
        theta_b, _ = cocycle_along(cfg.matrices[list(c.b_word.letters[:n])], flag)
        theta_shift = theta_a - theta_b
        chi_shift = math.fsum(cfg.generators[i].chi for i in a_word) - \
            math.fsum(cfg.generators[i].chi for i in c.b_word.letters[:n])
    accepted = bool(W.contains((c.z + theta_shift)[None, :], np.array([c.state.t + chi_shift]))[0])
    return FiberSample(a_word, theta_shift, chi_shift, accepted)


@dataclass
class ConditionalSample:
    """Accepted fiber samples with the acceptance statistics of the run."""

    samples: List[FiberSample]
    draws: int
    accepted: int
    ci: Tuple[float, float]
    exhausted: bool

    @property
    def rate(self) -> float:
        return self.accepted / self.draws if self.draws else 0.0


def window_conditional_sample(cfg: WalkConfig, c: BasePoint, n: int, W: WindowSpec, N_target: int,
                              seed: int, budget: int, lookahead: int = DEFAULT_LOOKAHEAD,
                              confidence: float = 0.95) -> ConditionalSample:
    """
    Rejection sampling of a ~ mu^n restricted to the window.

    Draws come in fixed batches; batch j uses stream (seed, n, j), so a
    smaller window sees the same words as a larger one.

    Args:
        cfg: Walk configuration
        c: Base point
        n: Fiber level (>= 1)
        W: Window
        N_target: Accepted samples wanted
        seed: Experiment seed
        budget: Maximum number of draws

    Returns:
        ConditionalSample; `exhausted` is set when the budget ran out first
    """
    if n < 1:
        raise PreconditionError("Fiber level n must be at least 1")
    if budget < 1:
        raise PreconditionError("budget must be positive")
    c.require_length(n, lookahead)
    flag, _ = lookahead_flag(cfg, c.b_word.letters[n:n + lookahead], lookahead)
    b_prefix = np.array(c.b_word.letters[:n], dtype=np.int64)
    theta_b, _ = cocycle_along(cfg.matrices[b_prefix], flag)
    chi_b = math.fsum(cfg.chi_values[b_prefix])
    samples: List[FiberSample] = []
    draws = accepted = batch = 0
    while accepted < N_target and draws < budget:
        size = min(FIBER_BATCH, budget - draws)
        letters = cfg.sample_letters(stream_rng(seed, n, batch), (size, n))
        theta = batched_cocycle(cfg.matrices, letters, flag.basis) - theta_b
        chi = cfg.chi_values[letters].sum(axis=1) - chi_b
        inside = W.contains(c.z + theta, c.state.t + chi)
        for i in np.flatnonzero(inside):
            if len(samples) < N_target:
                samples.append(FiberSample(Word(tuple(letters[i])), theta[i], float(chi[i]), True))
        accepted += int(inside.sum())
        draws += size
        batch += 1
    exhausted = accepted < N_target
    if exhausted:
        logger.warning(f"Fiber budget {budget} exhausted at n={n}: {accepted} of {N_target} accepted")
    ci = wilson_interval(accepted, draws, confidence)
    logger.info(f"Window sampling n={n}: acceptance {accepted}/{draws} [{ci[0]:.5f}, {ci[1]:.5f}]")
    return ConditionalSample(samples, draws, accepted, ci, exhausted)


def _direction_angles(vectors: np.ndarray) -> np.ndarray:
    """Angle of each line: in [0, pi) for d = 2, polar angle in [0, pi/2] for d = 3."""
    if vectors.shape[1] == 2:
        return np.mod(np.arctan2(vectors[:, 1], vectors[:, 0]), np.pi)
    return np.arccos(np.clip(np.abs(vectors[:, -1]), 0.0, 1.0))


def _bottom_flags(cfg: WalkConfig, letters: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """xi^- (top right singular vector) of each product; returns (vectors, gap mask)."""
    n = letters.shape[1]
    result = batched_products(cfg, letters, [n])[n]
    gap_ok = np.diff(result.kappa, axis=1)[:, 0] < -GAP_TOLERANCE
    _, _, vt = np.linalg.svd(result.top)
    return vt[:, 0, :], gap_ok


def circular_ks(a: np.ndarray, b: np.ndarray, period: float = np.pi) -> float:
    """
    Kolmogorov-Smirnov distance on the circle R / period Z: the smallest
    sup-distance of the two empirical CDFs over all cut points.
    """
    a = np.mod(np.asarray(a, dtype=float), period)
    b = np.mod(np.asarray(b, dtype=float), period)
    if a.size == 0 or b.size == 0:
        return 1.0
    points = np.concatenate([a, b])
    jumps = np.concatenate([np.full(a.size, 1.0 / a.size), np.full(b.size, -1.0 / b.size)])
    _, inverse = np.unique(points, return_inverse=True)
    g = np.concatenate([[0.0], np.cumsum(np.bincount(inverse.ravel(), weights=jumps))])
    return float(np.min(np.maximum(g.max() - g, g - g.min())))


@dataclass
class AnglesResult:
    """Conditioned and unconditioned xi^- angles with their KS distances."""

    table: pd.DataFrame
    ks: float
    ks_pvalue: float
    accepted: int
    dropped: Dict[str, int]


def law_of_angles(cfg: WalkConfig, c: BasePoint, n: int, W: WindowSpec, N: int, seed: int,
                  budget: int, lookahead: int = DEFAULT_LOOKAHEAD) -> AnglesResult:
    """
    Compare xi^-_{a_1..a_n} over window-accepted fiber words with xi^- of
    unconditioned words of the same length.

    Args:
        cfg: Walk configuration with d = 2 or 3
        c: Base point
        n: Fiber level
        W: Window
        N: Accepted samples wanted (and unconditioned samples drawn)
        seed: Experiment seed
        budget: Maximum fiber draws

    Returns:
        AnglesResult; the circular KS distance is 1 for a single pair of distinct angles
    """
    if cfg.dim not in (2, 3):
        raise PreconditionError(f"law_of_angles supports d = 2 or 3, got {cfg.dim}")
    conditioned = window_conditional_sample(cfg, c, n, W, N, seed, budget, lookahead)
    if not conditioned.samples:
        raise PreconditionError(f"No accepted fiber samples at n={n} within budget {budget}")
    cond_letters = np.array([s.a_word.letters for s in conditioned.samples], dtype=np.int64)
    cond_vec, cond_ok = _bottom_flags(cfg, cond_letters)
    uncond_letters = cfg.sample_letters(stream_rng(seed, UNCONDITIONED_STREAM, n), (len(cond_letters), n))
    uncond_vec, uncond_ok = _bottom_flags(cfg, uncond_letters)
    dropped = {"conditioned": int((~cond_ok).sum()), "unconditioned": int((~uncond_ok).sum())}
    if any(dropped.values()):
        logger.warning(f"law_of_angles: dropped samples without singular gap {dropped}")
    cond_angles = _direction_angles(cond_vec[cond_ok])
    uncond_angles = _direction_angles(uncond_vec[uncond_ok])
    if cfg.dim == 2:
        ks = circular_ks(cond_angles, uncond_angles)
    else:
        ks = float(stats.ks_2samp(cond_angles, uncond_angles).statistic)
    pvalue = float("nan")
    if cond_angles.size and uncond_angles.size:
        pvalue = float(stats.ks_2samp(cond_angles, uncond_angles).pvalue)
    rows = max(cond_angles.size, uncond_angles.size)
    table = pd.DataFrame({
        "sample": np.arange(rows),
        "angle_cond": np.pad(cond_angles, (0, rows - cond_angles.size), constant_values=np.nan),
        "angle_uncond": np.pad(uncond_angles, (0, rows - uncond_angles.size), constant_values=np.nan),
    })
    logger.info(f"Law of angles n={n}: KS={ks:.4f} over {cond_angles.size} accepted samples")
    return AnglesResult(table, ks, pvalue, conditioned.accepted, dropped)


def _exact_inverse_prefix(cfg: WalkConfig, letters: Sequence[int]):
    """b_k^-1 ... b_1^-1 as an exact integer matrix."""
    d = cfg.dim
    m = tuple(tuple(int(i == j) for j in range(d)) for i in range(d))
    for letter in letters:
        m = _int_matmul(cfg.generators[letter].inverse().entries, m)
    return m


def _exact_product(cfg: WalkConfig, letters: Sequence[int]):
    d = cfg.dim
    m = tuple(tuple(int(i == j) for j in range(d)) for i in range(d))
    for letter in letters:
        m = _int_matmul(m, cfg.generators[letter].entries)
    return m


def drift_image(cfg: WalkConfig, b_letters: Sequence[int], a_letters: Sequence[int],
                u: Sequence[float]) -> Tuple[np.ndarray, LogVector]:
    """
    D u = a_1 ... a_n b_n^-1 ... b_1^-1 u, evaluated twice: exactly (integer
    matrices times the binary fractions of u) and by LogVector transport.
    """
    if len(a_letters) != len(b_letters):
        raise PreconditionError("a and b prefixes must have the same length")
    exact_u = [Fraction(float(v)) for v in u]
    d_matrix = _int_matmul(_exact_product(cfg, a_letters), _exact_inverse_prefix(cfg, b_letters))
    exact = np.array([float(sum((e * x for e, x in zip(row, exact_u)), Fraction(0))) for row in d_matrix])
    transported = LogVector.from_vector(u)
    for letter in b_letters:
        transported = transported.apply(cfg.inverse_matrices[letter])
    for letter in reversed(list(a_letters)):
        transported = transported.apply(cfg.matrices[letter])
    return exact, transported


def _omega_theta_table(cfg: WalkConfig, c: BasePoint, n_max: int, lookahead: int) -> np.ndarray:
    """omega(theta_n(b)) for n = 0..n_max."""
    c.require_length(n_max, lookahead)
    return np.array([theta_n(cfg, c.b_word, n, lookahead)[0] for n in range(n_max + 1)])


def _inverse_transport(cfg: WalkConfig, c: BasePoint, u: np.ndarray, n_max: int) -> List[LogVector]:
    """w_k = b_k^-1 ... b_1^-1 u for k = 0..n_max."""
    w = [LogVector.from_vector(u)]
    for letter in c.b_word.letters[:n_max]:
        w.append(w[-1].apply(cfg.inverse_matrices[letter]))
    return w


def calibrate_norm_constant(cfg: WalkConfig, c: BasePoint, n: int, W: WindowSpec, N: int, seed: int,
                            budget: int, lookahead: int = DEFAULT_LOOKAHEAD,
                            quantile: float = NORM_CONTROL_QUANTILE) -> float:
    """
    C = exp of the `quantile` of |log ||a w|| - omega(theta_n(b)) - log ||w|||
    over accepted fiber words a and w = b_n^-1 ... b_1^-1 u for random unit u.
    """
    omega = theta_n(cfg, c.b_word, n, lookahead)[0]
    sample = window_conditional_sample(cfg, c, n, W, N, seed + 1, budget, lookahead)
    if not sample.samples:
        raise PreconditionError(f"No accepted fiber samples for calibration at n={n}")
    rng = stream_rng(seed, CALIBRATION_STREAM)
    deviations = []
    for s in sample.samples:
        u = rng.standard_normal(cfg.dim)
        w = _inverse_transport(cfg, c, u / np.linalg.norm(u), n)[-1]
        w_unit = LogVector(w.direction, 0.0)
        aw = w_unit.transport(cfg.matrices[list(reversed(s.a_word.letters))])
        deviations.append(abs(aw.log_norm - omega))
    constant = float(math.exp(np.quantile(deviations, quantile)))
    logger.info(f"Norm-control constant at n={n}: C={constant:.4f} from {len(deviations)} samples")
    return constant


@dataclass
class DriftDemoResult:
    """Per-sample drift records, the fitted direction rate and the norm-window coverage."""

    table: pd.DataFrame
    C: float
    delta_hat: float
    fraction_in_window: float
    aborted: Dict[int, str] = field(default_factory=dict)


def drift_demo(cfg: WalkConfig, c: BasePoint, u_norm: float, directions: int, W: WindowSpec,
               eps1: float, eps2: float, seed: int, N_per_direction: int = 200,
               budget: int = 10**6, n_max: int = 60, C: Optional[float] = None,
               calibration_n: int = 20, lookahead: int = DEFAULT_LOOKAHEAD) -> DriftDemoResult:
    """
    Exponential drift along fibers.

    For each random direction u (scaled to u_norm), w_n = b_n^-1 ... b_1^-1 u
    is transported stepwise; n_p is the first n with
    s_n = e^{omega(theta_n(b))} ||w_n|| / C > eps1. Accepted fiber words a at
    level n_p give D u = a_1 ... a_{n_p} w_{n_p}, recorded with
    log_ratio = log ||D u|| - omega(theta_{n_p}(b)) - log ||w_{n_p}|| and the
    distance of the line D u to xi^+ of the a-product.

    Args:
        cfg: Walk configuration
        c: Base point with a word of length >= n_max + lookahead
        u_norm: Size of the perturbation (<= 1e-4)
        directions: Number of random directions
        W: Window for the fiber words
        eps1, eps2: Norm window for s_{n_p}
        seed: Experiment seed
        N_per_direction: Accepted fiber words per direction
        budget: Fiber draws per direction
        n_max: Largest n searched for the crossing
        C: Norm-control constant (calibrated at `calibration_n` when omitted)

    Returns:
        DriftDemoResult
    """
    if u_norm > 1e-4 or u_norm <= 0:
        raise PreconditionError(f"u_norm must lie in (0, 1e-4], got {u_norm}")
    if not 0 < eps1 < eps2:
        raise PreconditionError("Need 0 < eps1 < eps2")
    c.require_length(n_max, lookahead)
    if C is None:
        C = calibrate_norm_constant(cfg, c, calibration_n, W, N_per_direction, seed, budget, lookahead)
    omega = _omega_theta_table(cfg, c, n_max, lookahead)
    rows = []
    aborted: Dict[int, str] = {}
    for direction in range(directions):
        rng = stream_rng(seed, DIRECTION_STREAM, direction)
        u = rng.standard_normal(cfg.dim)
        u = u / np.linalg.norm(u) * u_norm
        w = _inverse_transport(cfg, c, u, n_max)
        s = np.array([math.exp(omega[k] + w[k].log_norm) / C for k in range(n_max + 1)])
        crossing = np.flatnonzero(s[1:] > eps1)
        if crossing.size == 0:
            aborted[direction] = f"no crossing of eps1 up to n={n_max}"
            continue
        n_p = int(crossing[0]) + 1
        too_large = [k for k in range(n_p + 1) if w[k].norm >= WRAP_AROUND_LIMIT]
        if too_large:
            aborted[direction] = f"||w_k|| >= {WRAP_AROUND_LIMIT} at k={too_large[0]} (torus wrap-around)"
            logger.warning(f"drift_demo direction {direction}: {aborted[direction]}")
            continue
        sample = window_conditional_sample(cfg, c, n_p, W, N_per_direction,
                                           int(stream_rng(seed, direction).integers(2**31)), budget, lookahead)
        b_prefix = c.b_word.letters[:n_p]
        for j, fs in enumerate(sample.samples):
            exact, transported = drift_image(cfg, b_prefix, fs.a_word.letters, u)
            norm_exact = float(np.linalg.norm(exact))
            frame = cartan_projection(_exact_float_product(cfg, fs.a_word.letters))
            try:
                xi_plus, _ = density_points(frame, 1)
                ang = float(projective_distance(exact, xi_plus[:, 0]))
            except GapError:
                ang = float("nan")
            rows.append({
                "direction": direction,
                "n_p": n_p,
                "sample": j,
                "s_np": float(s[n_p]),
                "in_eps_window": bool(eps1 < s[n_p] <= eps2),
                "norm_Du": norm_exact,
                "log_ratio": math.log(norm_exact) - omega[n_p] - w[n_p].log_norm,
                "ang_dist": ang,
                "transport_gap": abs(transported.log_norm - math.log(norm_exact)),
            })
    table = pd.DataFrame(rows, columns=["direction", "n_p", "sample", "s_np", "in_eps_window", "norm_Du",
                                        "log_ratio", "ang_dist", "transport_gap"])
    if table.empty:
        logger.warning("drift_demo produced no samples")
        return DriftDemoResult(table, C, float("nan"), float("nan"), aborted)
    fraction = float((table["log_ratio"].abs() <= math.log(C)).mean())
    valid = table[(table["ang_dist"] > 0) & np.isfinite(table["ang_dist"])]
    if len(valid):
        n_vals = valid["n_p"].to_numpy(dtype=float)
        y = -np.log(valid["ang_dist"].to_numpy())
        delta_hat = float(np.dot(n_vals, y) / np.dot(n_vals, n_vals))
    else:
        delta_hat = float("nan")
    logger.info(f"drift_demo: {len(table)} samples, {fraction:.3f} in norm window, delta_hat={delta_hat:.4f}")
    return DriftDemoResult(table, C, delta_hat, fraction, aborted)


def _exact_float_product(cfg: WalkConfig, letters: Sequence[int]) -> np.ndarray:
    """a_1 ... a_n as floats (exact while entries stay below 2^53)."""
    return np.array(_exact_product(cfg, letters), dtype=float)


@dataclass
class EquidistributionResult:
    """Cell masses of accepted fiber shifts per n, and successive L1 differences."""

    table: pd.DataFrame
    l1_diffs: List[float]


def fiber_equidistribution(cfg: WalkConfig, c: BasePoint, n_list: Sequence[int], W: WindowSpec,
                           partition: Sequence[int], N: int, seed: int, budget: int,
                           lookahead: int = DEFAULT_LOOKAHEAD, confidence: float = 0.95) -> EquidistributionResult:
    """
    Conditional masses of a grid partition of the window box
    U_1 x ... x U_{d-1} x I, in the coordinates (z + theta_shift)_j and
    t + chi_shift. Cells are numbered in row-major order over the axes.

    Args:
        cfg: Walk configuration
        c: Base point
        n_list: Fiber levels
        W: Bounded window
        partition: Cell counts along (theta_1, ..., theta_{d-1}, chi)
        N: Accepted samples per n
        seed: Experiment seed
        budget: Draws per n

    Returns:
        EquidistributionResult with columns n, cell, mass, ci_lo, ci_hi
    """
    if not W.bounded:
        raise PreconditionError("fiber_equidistribution needs a bounded window")
    shape = tuple(int(m) for m in partition)
    if len(shape) != len(W.U) + 1:
        raise PreconditionError(f"Partition needs {len(W.U) + 1} cell counts (one per window axis), got {shape}")
    if min(shape) < 1:
        raise PreconditionError("Partition needs at least one cell per axis")
    bounds = list(W.U) + [W.I]
    edges = [np.linspace(lo, hi, m + 1) for (lo, hi), m in zip(bounds, shape)]
    n_cells = int(np.prod(shape))
    theta_axes = len(W.U)
    rows = []
    masses = []
    for n in n_list:
        sample = window_conditional_sample(cfg, c, n, W, N, seed, budget, lookahead, confidence)
        total = len(sample.samples)
        coords = np.array([[c.z[j] + s.theta_shift[j] for j in range(theta_axes)] + [c.state.t + s.chi_shift]
                           for s in sample.samples]).reshape(total, theta_axes + 1)
        index = tuple(np.clip(np.searchsorted(e, coords[:, j], side="right") - 1, 0, m - 1)
                      for j, (e, m) in enumerate(zip(edges, shape)))
        counts = np.bincount(np.ravel_multi_index(index, shape), minlength=n_cells) if total else np.zeros(n_cells)
        cell_mass = counts / total if total else np.full(n_cells, np.nan)
        masses.append(cell_mass)
        for cell, count in enumerate(counts):
            lo, hi = wilson_interval(int(count), total, confidence)
            rows.append({"n": n, "cell": cell, "mass": cell_mass[cell], "ci_lo": lo, "ci_hi": hi})
    l1 = [float(np.abs(masses[i] - masses[i - 1]).sum()) for i in range(1, len(masses))]
    logger.info(f"Fiber equidistribution: successive L1 differences {[round(v, 4) for v in l1]}")
    return EquidistributionResult(pd.DataFrame(rows, columns=["n", "cell", "mass", "ci_lo", "ci_hi"]), l1)
