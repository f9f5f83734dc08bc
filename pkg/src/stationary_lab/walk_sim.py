"""
Trajectories of the walk on T^d x R, first returns of the chi coordinate
to 0 (the induced walk), recurrence statistics, heavy-tail diagnostics and
the Foster-Lyapunov drift certificate.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .cartan import log_operator_norm
from .config import (CERTIFY_RETURN_CAP, DEFAULT_RETURN_CAP, MAX_CENSORED_FRACTION, RETURN_BLOCK_ELEMENTS,
                     RETURN_BLOCK_MAX, RETURN_BLOCK_START, WALKERS_PER_STREAM)
from .core_model import StateXT, TorusPoint, WalkConfig, Word, apply_exact_rational
from .exceptions import PreconditionError
from .utils import loglog_slope, normal_quantile, replica_rng, run_replicas, torus_distance, wilson_interval

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.12g"


@dataclass
class Trajectory:
    """states[0] is the start; states[k] = word[k-1] applied to states[k-1]."""

    start: StateXT
    states: List[StateXT]
    word: Word

    def __len__(self) -> int:
        return len(self.word)

    def positions(self) -> np.ndarray:
        return np.array([s.x.as_array() for s in self.states])

    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])

    def to_frame(self) -> pd.DataFrame:
        pos = self.positions()
        frame = pd.DataFrame({"step": np.arange(len(self.states))})
        for i in range(pos.shape[1]):
            frame[f"x{i + 1}"] = pos[:, i]
        frame["t"] = self.times()
        return frame


@dataclass
class ReturnSample:
    """One draw of the induced walk: the word b_1 ... b_tau with chi = 0."""

    tau: int
    word: Word
    log_norm: float


@dataclass
class Censored:
    """The chi coordinate did not return to 0 within `cap` steps."""

    cap: int
    partial_log_norm: Optional[float] = None
    word: Optional[Word] = field(default=None, repr=False)


def _require_return_model(cfg: WalkConfig) -> np.ndarray:
    if not cfg.integer_chi:
        raise PreconditionError("First returns need integer chi values")
    chi = cfg.int_chi_values
    if np.all(chi == 0):
        raise PreconditionError("chi is identically 0, every return time equals 1")
    return chi


def simulate(cfg: WalkConfig, start: StateXT, n: int, seed: int) -> Trajectory:
    """
    Sample a trajectory of n steps.

    Args:
        cfg: Walk configuration
        start: Initial state; exact start points give an exact trajectory
        n: Number of steps
        seed: RNG seed

    Returns:
        Trajectory with n + 1 states
    """
    if n < 0:
        raise PreconditionError(f"n must be nonnegative, got {n}")
    if start.dim != cfg.dim:
        raise PreconditionError(f"Start point has dimension {start.dim}, model has {cfg.dim}")
    letters = cfg.sample_letters(replica_rng(seed, 0), n)
    ts = start.t + np.concatenate([[0.0], np.cumsum(cfg.chi_values[letters])])
    states = [start]
    if start.x.exact:
        x = start.x.coords
        for j, letter in enumerate(letters):
            x = apply_exact_rational(cfg.generators[letter].entries, x)
            states.append(StateXT(TorusPoint(x, exact=True), float(ts[j + 1])))
    else:
        x = start.x.as_array()
        for j, letter in enumerate(letters):
            x = np.mod(cfg.matrices[letter] @ x, 1.0)
            states.append(StateXT(TorusPoint(tuple(x), exact=False), float(ts[j + 1])))
    logger.debug(f"Simulated {n} steps from {start}")
    return Trajectory(start, states, Word(tuple(letters)))


def write_trajectory_csv(traj: Trajectory, path: Union[str, Path]) -> Path:
    """Write (step, x1..xd, t) rows."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    traj.to_frame().to_csv(path, index=False, float_format=FLOAT_FORMAT)
    logger.info(f"Trajectory with {len(traj.states)} states written to {path}")
    return path


def _draw_excursion(chi: np.ndarray, probs: np.ndarray, rng: np.random.Generator,
                    cap: int, prefix: Sequence[int] = ()) -> Tuple[np.ndarray, bool]:
    """Letters until the cumulative chi first returns to 0; returns (letters, returned)."""
    pieces = []
    level = 0
    used = 0
    block = RETURN_BLOCK_START
    prefix = np.asarray(prefix, dtype=np.int64)
    while used < cap:
        if used < len(prefix):
            letters = prefix[:cap]
        else:
            letters = rng.choice(len(chi), size=min(block, cap - used), p=probs)
            block = min(2 * block, RETURN_BLOCK_MAX)
        path = level + np.cumsum(chi[letters])
        hits = np.flatnonzero(path == 0)
        if hits.size:
            pieces.append(letters[:hits[0] + 1])
            return np.concatenate(pieces), True
        pieces.append(letters)
        level = int(path[-1])
        used += len(letters)
    return np.concatenate(pieces) if pieces else np.zeros(0, dtype=np.int64), False


def first_return_sampler(cfg: WalkConfig, seed: int, cap: int = DEFAULT_RETURN_CAP,
                         prefix: Sequence[int] = (), rng: Optional[np.random.Generator] = None
                         ) -> Union[ReturnSample, Censored]:
    """
    One draw of mu_tau: letters until chi(b_1 ... b_n) = 0.

    Args:
        cfg: Walk configuration with integer chi
        seed: RNG seed (ignored when `rng` is given)
        cap: Censoring cap on tau
        prefix: Letters forced at the start of the word
        rng: Explicit generator

    Returns:
        ReturnSample, or Censored when no return happened within `cap` steps
    """
    chi = _require_return_model(cfg)
    if cap < 1:
        raise PreconditionError("cap must be at least 1")
    rng = rng or replica_rng(seed, 0)
    letters, returned = _draw_excursion(chi, cfg.prob_array, rng, cap, prefix)
    log_norm = log_operator_norm(cfg, letters)
    if not returned:
        logger.debug(f"Return time censored at cap={cap}")
        return Censored(cap, log_norm, Word(tuple(letters)))
    return ReturnSample(len(letters), Word(tuple(letters)), log_norm)


def _return_times_block(chi: np.ndarray, probs: np.ndarray, rng: np.random.Generator,
                        walkers: int, cap: int) -> np.ndarray:
    """tau for `walkers` independent excursions; censored entries are cap + 1."""
    tau = np.full(walkers, cap + 1, dtype=np.int64)
    active = np.arange(walkers)
    level = np.zeros(walkers, dtype=np.int64)
    elapsed = 0
    block = RETURN_BLOCK_START
    while active.size and elapsed < cap:
        width = min(max(RETURN_BLOCK_START, min(block, RETURN_BLOCK_ELEMENTS // active.size)), cap - elapsed)
        steps = chi[rng.choice(len(chi), size=(active.size, width), p=probs)]
        path = level[:, None] + np.cumsum(steps, axis=1)
        hit = path == 0
        returned = hit.any(axis=1)
        tau[active[returned]] = elapsed + np.argmax(hit[returned], axis=1) + 1
        level = path[~returned, -1]
        active = active[~returned]
        elapsed += width
        block = min(2 * block, RETURN_BLOCK_MAX)
    return tau


def sample_return_times(cfg: WalkConfig, N: int, seed: int, cap: int = DEFAULT_RETURN_CAP,
                        workers: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    N independent first-return times, vectorized over walkers.

    Walkers are split into fixed groups with one RNG stream each, so the
    result does not depend on `workers`.

    Returns:
        (tau, censored): tau is cap + 1 where censored is True
    """
    chi = _require_return_model(cfg)
    sizes = [WALKERS_PER_STREAM] * (N // WALKERS_PER_STREAM)
    if N % WALKERS_PER_STREAM:
        sizes.append(N % WALKERS_PER_STREAM)
    blocks = run_replicas(lambda i, rng: _return_times_block(chi, cfg.prob_array, rng, sizes[i], cap),
                          seed, len(sizes), workers)
    tau = np.concatenate(blocks) if blocks else np.zeros(0, dtype=np.int64)
    censored = tau > cap
    if censored.any():
        logger.warning(f"{int(censored.sum())} of {N} return times censored at cap={cap}")
    return tau, censored


@dataclass
class ReturnTail:
    """Survival curve k -> P(tau >= k) with Wilson intervals."""

    table: pd.DataFrame
    slope: float
    window: Tuple[int, int]
    censored: int
    N: int


def return_tail(cfg: WalkConfig, kmax: int, N: int, seed: int,
                window: Optional[Tuple[int, int]] = None,
                confidence: float = 0.95,
                workers: Optional[int] = None) -> ReturnTail:
    """
    Monte Carlo estimate of P(tau >= k) for k = 1..kmax.

    Only whether tau >= k matters for k <= kmax, so excursions are cut at kmax.

    Args:
        cfg: Walk configuration with integer, non-degenerate chi
        kmax: Largest k in the table
        N: Number of excursions (>= 1000)
        seed: Experiment seed
        window: (k_lo, k_hi) for the log-log slope fit (default (kmax // 100, kmax))

    Returns:
        ReturnTail with columns k, p_hat, ci_lo, ci_hi
    """
    if N < 1000:
        raise PreconditionError(f"return_tail needs N >= 1000, got {N}")
    if kmax < 1:
        raise PreconditionError("kmax must be at least 1")
    tau, censored = sample_return_times(cfg, N, seed, cap=kmax, workers=workers)
    ks = np.arange(1, kmax + 1)
    survivors = N - np.searchsorted(np.sort(tau), ks, side="left")
    bounds = [wilson_interval(s, N, confidence) for s in survivors]
    table = pd.DataFrame({
        "k": ks,
        "p_hat": survivors / N,
        "ci_lo": [b[0] for b in bounds],
        "ci_hi": [b[1] for b in bounds],
    })
    window = window or (max(1, kmax // 100), kmax)
    in_window = (table["k"] >= window[0]) & (table["k"] <= window[1])
    slope = loglog_slope(table.loc[in_window, "k"], table.loc[in_window, "p_hat"])
    logger.info(f"Return tail: P(tau >= {kmax}) = {survivors[-1] / N:.5f}, log-log slope {slope:.4f} on {window}")
    return ReturnTail(table, slope, window, int(censored.sum()), N)


def conservativity_check(cfg: WalkConfig, start: StateXT, radius: float, horizons: Sequence[int],
                         N: int, seed: int, confidence: float = 0.95,
                         workers: Optional[int] = None) -> pd.DataFrame:
    """
    Fraction of trajectories that re-enter the ball B(start, radius) at some
    step 1 <= n <= horizon, for each horizon.

    The distance on T^d x R is sqrt(d_T(x, y)^2 + (t - s)^2).

    Returns:
        DataFrame with columns horizon, fraction, ci_lo, ci_hi
    """
    if radius <= 0:
        raise PreconditionError(f"radius must be positive, got {radius}")
    horizons = sorted(int(h) for h in horizons)
    if horizons and horizons[0] < 0:
        raise PreconditionError("Horizons must be nonnegative")
    last = horizons[-1] if horizons else 0
    x0 = start.x.as_array()
    sizes = [WALKERS_PER_STREAM] * (N // WALKERS_PER_STREAM) + ([N % WALKERS_PER_STREAM] if N % WALKERS_PER_STREAM else [])

    def run_group(i: int, rng: np.random.Generator) -> np.ndarray:
        size = sizes[i]
        x = np.tile(x0, (size, 1))
        t = np.full(size, float(start.t))
        returned = np.zeros(size, dtype=bool)
        counts = np.zeros(len(horizons), dtype=np.int64)
        h_idx = 0
        while h_idx < len(horizons) and horizons[h_idx] == 0:
            h_idx += 1
        for step in range(1, last + 1):
            letters = cfg.sample_letters(rng, size)
            x = np.mod(np.einsum("nij,nj->ni", cfg.matrices[letters], x), 1.0)
            t = t + cfg.chi_values[letters]
            dist = np.sqrt(torus_distance(x, x0) ** 2 + (t - start.t) ** 2)
            returned |= dist <= radius
            while h_idx < len(horizons) and horizons[h_idx] == step:
                counts[h_idx] = returned.sum()
                h_idx += 1
        return counts

    totals = np.sum(run_replicas(run_group, seed, len(sizes), workers), axis=0) if sizes else np.zeros(len(horizons))
    rows = []
    for h, c in zip(horizons, np.atleast_1d(totals)):
        lo, hi = wilson_interval(int(c), N, confidence)
        rows.append({"horizon": h, "fraction": int(c) / N if N else 0.0, "ci_lo": lo, "ci_hi": hi})
    logger.info(f"Conservativity: radius={radius}, fractions {[round(r['fraction'], 4) for r in rows]}")
    return pd.DataFrame(rows, columns=["horizon", "fraction", "ci_lo", "ci_hi"])


@dataclass
class HeavyTailReport:
    """Truncated means of log ||b_1 ... b_tau|| over nested samples, and the tail fit."""

    table: pd.DataFrame
    tail_exponent: float
    log_norms: np.ndarray = field(repr=False)
    censored: np.ndarray = field(repr=False)


def heavy_tail_diagnostic(cfg: WalkConfig, N_list: Sequence[int], seed: int,
                          cap: int = DEFAULT_RETURN_CAP, tail_fraction: float = 0.1,
                          workers: Optional[int] = None) -> HeavyTailReport:
    """
    Growth of truncated means of the induced walk's log-norm.

    Sample i uses stream (seed, i); the sample of size N is the first N
    draws, so sizes are nested. Censored draws are excluded from the means
    and counted separately; their partial log-norm still enters the tail
    fit as a lower bound.

    Args:
        cfg: Walk configuration
        N_list: Increasing sample sizes
        seed: Experiment seed
        cap: Censoring cap on tau
        tail_fraction: Upper fraction of the sample used for the tail fit

    Returns:
        HeavyTailReport with columns N, truncated_mean, censored
    """
    N_list = [int(n) for n in N_list]
    if not N_list or any(b <= a for a, b in zip(N_list, N_list[1:])) or N_list[0] < 1:
        raise PreconditionError(f"N_list must be increasing positive sizes, got {N_list}")
    chi = _require_return_model(cfg)

    def draw(i: int, rng: np.random.Generator) -> Tuple[float, bool]:
        letters, returned = _draw_excursion(chi, cfg.prob_array, rng, cap)
        return log_operator_norm(cfg, letters), not returned

    draws = run_replicas(draw, seed, N_list[-1], workers)
    values = np.array([d[0] for d in draws])
    censored = np.array([d[1] for d in draws], dtype=bool)
    rows = []
    for n in N_list:
        complete = values[:n][~censored[:n]]
        rows.append({
            "N": n,
            "truncated_mean": float(complete.mean()) if complete.size else float("nan"),
            "censored": int(censored[:n].sum()),
        })
    if censored.any():
        logger.warning(f"{int(censored.sum())} induced-walk samples censored at cap={cap}")
    tail_exponent = _tail_exponent(values, tail_fraction)
    logger.info(f"Heavy tail: truncated means {[round(r['truncated_mean'], 3) for r in rows]}, "
                f"tail exponent {tail_exponent:.3f}")
    return HeavyTailReport(pd.DataFrame(rows), tail_exponent, values, censored)


def _tail_exponent(values: np.ndarray, tail_fraction: float) -> float:
    """-slope of log P(X > s) against log s over the upper `tail_fraction` of the sample."""
    x = np.sort(values[values > 0])[::-1]
    n_tail = int(len(x) * tail_fraction)
    if n_tail < 10:
        return float("nan")
    tail = x[:n_tail]
    survival = np.arange(1, n_tail + 1) / len(values)
    return -loglog_slope(tail, survival)


def drift_function(x: np.ndarray, delta: float) -> np.ndarray:
    """u(x) = d(x, 0)^(-delta) on the torus."""
    x = np.asarray(x, dtype=float)
    return torus_distance(x, np.zeros(x.shape[-1])) ** (-delta)


def certify_grid(dim: int, per_axis: int = 8) -> np.ndarray:
    """Grid points ((i + 0.5) / per_axis)_i, which avoid 0."""
    axis = (np.arange(per_axis) + 0.5) / per_axis
    mesh = np.meshgrid(*([axis] * dim), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def _induced_steps(cfg: WalkConfig, chi: np.ndarray, x0: np.ndarray, k: int, N: int,
                   cap: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """
    Run N walkers from x0 through k first returns of chi to 0.

    Returns:
        (final torus positions (N, d), censored flags (N,))
    """
    x = np.tile(np.asarray(x0, dtype=float), (N, 1))
    level = np.zeros(N, dtype=np.int64)
    returns = np.zeros(N, dtype=np.int64)
    since = np.zeros(N, dtype=np.int64)
    censored = np.zeros(N, dtype=bool)
    active = np.arange(N)
    while active.size:
        letters = rng.choice(len(chi), size=active.size, p=cfg.prob_array)
        x[active] = np.mod(np.einsum("nij,nj->ni", cfg.matrices[letters], x[active]), 1.0)
        level[active] += chi[letters]
        since[active] += 1
        back = level[active] == 0
        returns[active[back]] += 1
        since[active[back]] = 0
        over = ~back & (since[active] >= cap)
        censored[active[over]] = True
        active = active[(returns[active] < k) & ~over]
    return x, censored


def _upper_hull_last_slope(u: np.ndarray, y: np.ndarray) -> Tuple[float, List[int]]:
    """Slope of the upper convex hull edge ending at the largest u, and that edge's endpoints."""
    order = np.lexsort((-y, u))
    hull: List[int] = []
    for i in order:
        if hull and u[hull[-1]] == u[i]:
            continue
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            cross = (u[b] - u[a]) * (y[i] - y[a]) - (y[b] - y[a]) * (u[i] - u[a])
            if cross >= 0:
                hull.pop()
            else:
                break
        hull.append(i)
    if len(hull) < 2:
        return 0.0, hull
    a, b = hull[-2], hull[-1]
    return float((y[b] - y[a]) / (u[b] - u[a])), [a, b]


@dataclass
class Certificate:
    """P^k u <= a u + C on every grid point, at one-sided confidence `confidence`."""

    delta: float
    k: int
    a: float
    C: float
    confidence: float
    table: pd.DataFrame = field(repr=False)


@dataclass
class Failure:
    """No certificate: `violators` are the grid rows that force a >= 1 (or invalid points)."""

    delta: float
    k: int
    a: float
    reason: str
    violators: pd.DataFrame
    table: pd.DataFrame = field(repr=False)


def drift_certify(cfg: WalkConfig, delta: float, k: int, grid_spec: int, N: int, seed: int,
                  cap: int = CERTIFY_RETURN_CAP, workers: Optional[int] = None,
                  confidence: float = 0.95) -> Union[Certificate, Failure]:
    """
    Foster-Lyapunov certificate for the induced walk with u(x) = d(x, 0)^(-delta).

    For each grid point, N runs of k induced steps estimate P^k u(x); the
    upper confidence bound is mean + z s / sqrt(N) with z the one-sided
    normal quantile at `confidence`. (a, C) come from the
    upper convex hull of (u, UCB): a is the slope of the edge at the
    largest u (clamped at 0) and C = max(UCB - a u).

    Args:
        cfg: Walk configuration with integer chi
        delta: Exponent of the drift function (> 0)
        k: Number of induced steps (>= 1)
        grid_spec: Grid points per axis
        N: Runs per grid point
        seed: Experiment seed; grid point i uses stream (seed, i)
        cap: Censoring cap per return
        confidence: One-sided level of the upper bounds

    Returns:
        Certificate if a < 1, otherwise Failure
    """
    if delta <= 0:
        raise PreconditionError(f"delta must be positive, got {delta}")
    if k < 1:
        raise PreconditionError(f"k must be at least 1, got {k}")
    if N < 2:
        raise PreconditionError("N must be at least 2")
    if not 0.5 <= confidence < 1.0:
        raise PreconditionError(f"confidence must lie in [0.5, 1), got {confidence}")
    z = normal_quantile(2.0 * confidence - 1.0)
    chi = _require_return_model(cfg)
    grid = certify_grid(cfg.dim, grid_spec)

    def run_point(i: int, rng: np.random.Generator) -> dict:
        final, censored = _induced_steps(cfg, chi, grid[i], k, N, cap, rng)
        values = drift_function(final[~censored], delta)
        n_ok = values.size
        mean = float(values.mean()) if n_ok else float("nan")
        sd = float(values.std(ddof=1)) if n_ok > 1 else float("nan")
        return {
            "estimate": mean,
            "ucb": mean + z * sd / math.sqrt(n_ok) if n_ok > 1 else float("nan"),
            "censored": int(censored.sum()),
        }

    per_point = run_replicas(run_point, seed, len(grid), workers)
    table = pd.DataFrame(grid, columns=[f"x{i + 1}" for i in range(cfg.dim)])
    table["u_value"] = drift_function(grid, delta)
    table["estimate"] = [s["estimate"] for s in per_point]
    table["ucb"] = [s["ucb"] for s in per_point]
    table["censored"] = [s["censored"] for s in per_point]
    table["valid"] = (table["censored"] <= MAX_CENSORED_FRACTION * N) & np.isfinite(table["ucb"])
    return certificate_from_table(table, delta, k, confidence)


def certificate_from_table(table: pd.DataFrame, delta: float, k: int,
                           confidence: float = 0.95) -> Union[Certificate, Failure]:
    """(a, C) from the upper hull of the valid (u_value, ucb) rows of a certificate table."""
    invalid = table[~table["valid"]]
    if len(invalid):
        logger.warning(f"{len(invalid)} grid points invalidated by censored return times")
    valid = table[table["valid"]]
    if valid.empty:
        return Failure(delta, k, float("nan"), "all grid points invalid", invalid, table)

    u = valid["u_value"].to_numpy()
    y = valid["ucb"].to_numpy()
    slope, edge = _upper_hull_last_slope(u, y)
    a = max(0.0, slope)
    C = float(np.max(y - a * u))
    logger.info(f"Drift certificate delta={delta}, k={k}: a={a:.4f}, C={C:.4f}")
    if a >= 1.0:
        return Failure(delta, k, a, f"hull slope {a:.4f} >= 1", valid.iloc[edge], table)
    return Certificate(delta, k, a, C, confidence, table)


def search_drift_certificate(cfg: WalkConfig, delta: float, grid_spec: int, N: int, seed: int,
                             k_max: int = 8, cap: int = CERTIFY_RETURN_CAP,
                             workers: Optional[int] = None,
                             confidence: float = 0.95) -> Union[Certificate, Failure]:
    """Try k = 1..k_max and return the first certificate, or the last failure."""
    result: Union[Certificate, Failure, None] = None
    for k in range(1, k_max + 1):
        result = drift_certify(cfg, delta, k, grid_spec, N, seed, cap=cap, workers=workers,
                               confidence=confidence)
        if isinstance(result, Certificate):
            return result
        logger.info(f"No certificate at k={k}: {result.reason}")
    return result
