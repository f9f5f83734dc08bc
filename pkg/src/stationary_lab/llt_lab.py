"""
Local limit experiments: exact lattice dynamic programming for the chi
coordinate, and Monte Carlo estimates of the joint (norm, chi) local limit.
"""

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .cartan import lookahead_flag, lyapunov_estimate, sample_words
from .config import (DEFAULT_LOOKAHEAD, DP_SUPPORT_LIMIT, JOINT_LLT_N_CAP, LYAPUNOV_CENTERING_N,
                     LYAPUNOV_CENTERING_REPLICAS, RATIONAL_RETURN_KMAX)
from .core_model import WalkConfig
from .exceptions import MemoryGuardError, PeriodicityError, PreconditionError
from .utils import run_replicas, split_counts, stream_rng, wilson_interval

logger = logging.getLogger(__name__)

Mass = Union[Fraction, float]

FLAG_STREAM = 0x464C4147
JOINT_CHUNK = 1 << 16


@dataclass(frozen=True)
class LatticeDist:
    """
    A probability on Z: masses[i] is the mass of offset + i.
    Rational distributions hold Fractions that sum to exactly 1.
    """

    offset: int
    masses: Tuple[Mass, ...]

    def __post_init__(self):
        masses = tuple(self.masses)
        if not masses:
            raise PreconditionError("A lattice distribution needs at least one mass")
        rational = all(isinstance(m, (Fraction, int)) for m in masses)
        masses = tuple(Fraction(m) for m in masses) if rational else tuple(float(m) for m in masses)
        if any(m < 0 for m in masses):
            raise PreconditionError("Masses must be nonnegative")
        total = sum(masses) if rational else math.fsum(masses)
        if (rational and total != 1) or (not rational and abs(total - 1.0) > 1e-12):
            raise PreconditionError(f"Masses sum to {total}, expected 1")
        object.__setattr__(self, "masses", masses)

    @classmethod
    def from_mapping(cls, masses: Dict[int, Mass]) -> "LatticeDist":
        lo, hi = min(masses), max(masses)
        zero = Fraction(0) if all(isinstance(m, (Fraction, int)) for m in masses.values()) else 0.0
        return cls(lo, tuple(masses.get(k, zero) for k in range(lo, hi + 1)))

    @classmethod
    def from_config(cls, cfg: WalkConfig, rational: bool = True) -> "LatticeDist":
        """chi_* mu; float probabilities are read as rationals with denominator <= 10^9."""
        if not cfg.integer_chi:
            raise PreconditionError("chi_* mu is a lattice distribution only for integer chi")
        chi = cfg.int_chi_values
        lo = int(chi.min())
        masses: List[Mass] = [Fraction(0) if rational else 0.0] * (int(chi.max()) - lo + 1)
        for c, p in zip(chi, cfg.probs):
            masses[int(c) - lo] += Fraction(p).limit_denominator(10**9) if rational else p
        return cls(lo, tuple(masses))

    @property
    def rational(self) -> bool:
        return isinstance(self.masses[0], Fraction)

    @property
    def support(self) -> List[int]:
        return [self.offset + i for i, m in enumerate(self.masses) if m > 0]

    def prob(self, k: int) -> Mass:
        i = k - self.offset
        if 0 <= i < len(self.masses):
            return self.masses[i]
        return Fraction(0) if self.rational else 0.0

    @property
    def mean(self) -> Mass:
        return sum((self.offset + i) * m for i, m in enumerate(self.masses))

    @property
    def variance(self) -> Mass:
        mean = self.mean
        return sum((self.offset + i - mean) ** 2 * m for i, m in enumerate(self.masses))

    @property
    def period(self) -> int:
        """gcd of the differences of support points (0 for a Dirac mass)."""
        support = self.support
        return reduce(math.gcd, (s - support[0] for s in support[1:]), 0)


def _int_convolve(a: List[int], kernel: List[int]) -> List[int]:
    out = [0] * (len(a) + len(kernel) - 1)
    for j, kv in enumerate(kernel):
        if kv:
            for i, av in enumerate(a):
                if av:
                    out[i + j] += av * kv
    return out


def _common_denominator(masses: Sequence[Fraction]) -> Tuple[int, List[int]]:
    den = reduce(lambda a, b: a * b // math.gcd(a, b), (m.denominator for m in masses), 1)
    return den, [int(m * den) for m in masses]


def _guard_support(dist: LatticeDist, n: int) -> None:
    size = n * (len(dist.masses) - 1) + 1
    if size > DP_SUPPORT_LIMIT:
        raise MemoryGuardError(f"Support of S_{n} has {size} points, limit is {DP_SUPPORT_LIMIT}")


def _convolution_powers(dist: LatticeDist, ns: Iterable[int]):
    """Yield (n, LatticeDist of S_n) for the requested n, in increasing order."""
    wanted = sorted(set(int(n) for n in ns))
    if not wanted:
        return
    if wanted[0] < 0:
        raise PreconditionError("n must be nonnegative")
    _guard_support(dist, wanted[-1])
    if dist.rational:
        den, kernel = _common_denominator(dist.masses)
        current = [1]
        scale = 1
    else:
        kernel_f = np.array(dist.masses, dtype=float)
        current_f = np.array([1.0])
    step = 0
    for n in wanted:
        while step < n:
            if dist.rational:
                current = _int_convolve(current, kernel)
                scale *= den
            else:
                current_f = np.convolve(current_f, kernel_f)
            step += 1
        if dist.rational:
            masses = tuple(Fraction(c, scale) for c in current)
        else:
            masses = tuple(current_f / current_f.sum())
        yield n, LatticeDist(n * dist.offset, masses)


def lattice_dp(chi_dist: LatticeDist, n: int) -> LatticeDist:
    """
    Law of S_n, the n-fold convolution of chi_dist.

    Args:
        chi_dist: Step distribution (exact when rational)
        n: Number of steps (>= 0)

    Returns:
        LatticeDist of S_n; n = 0 gives the Dirac mass at 0

    Raises:
        MemoryGuardError: the support would exceed DP_SUPPORT_LIMIT points
    """
    if n < 0:
        raise PreconditionError(f"n must be nonnegative, got {n}")
    for _, law in _convolution_powers(chi_dist, [n]):
        return law


def return_time_dp(chi_dist: LatticeDist, kmax: int) -> List[Mass]:
    """
    Exact first-return law P(tau = k), k = 1..kmax, of S_n to 0.

    The mass at level 0 is absorbed after every step; what remains is the
    law of S_k restricted to {tau > k}.

    Returns:
        List whose entry k - 1 is P(tau = k)
    """
    if kmax < 1:
        raise PreconditionError("kmax must be at least 1")
    if chi_dist.rational and kmax > RATIONAL_RETURN_KMAX:
        raise PreconditionError(f"Rational return_time_dp is limited to kmax <= {RATIONAL_RETURN_KMAX}")
    _guard_support(chi_dist, kmax)
    offset = chi_dist.offset
    out: List[Mass] = []
    if chi_dist.rational:
        den, kernel = _common_denominator(chi_dist.masses)
        alive, low, scale = [1], 0, 1
        for _ in range(kmax):
            alive = _int_convolve(alive, kernel)
            low += offset
            scale *= den
            zero = -low
            hit = alive[zero] if 0 <= zero < len(alive) else 0
            out.append(Fraction(hit, scale))
            if 0 <= zero < len(alive):
                alive[zero] = 0
    else:
        kernel_f = np.array(chi_dist.masses, dtype=float)
        alive_f, low = np.array([1.0]), 0
        for _ in range(kmax):
            alive_f = np.convolve(alive_f, kernel_f)
            low += offset
            zero = -low
            hit = float(alive_f[zero]) if 0 <= zero < len(alive_f) else 0.0
            out.append(hit)
            if 0 <= zero < len(alive_f):
                alive_f[zero] = 0.0
    logger.debug(f"return_time_dp: P(tau <= {kmax}) = {float(sum(out)):.6f}")
    return out


def llt_1d_check(chi_dist: LatticeDist, n_list: Sequence[int]) -> pd.DataFrame:
    """
    sqrt(n) P(S_n = 0) against the Gaussian local limit 1 / sqrt(2 pi sigma^2).

    Args:
        chi_dist: Centered, aperiodic step distribution
        n_list: Step counts

    Returns:
        DataFrame with columns n, exact, limit, rel_err

    Raises:
        PeriodicityError: the support differences have gcd > 1
    """
    period = chi_dist.period
    if period != 1:
        raise PeriodicityError(period)
    if abs(float(chi_dist.mean)) > 1e-12:
        raise PreconditionError(f"chi distribution is not centered: mean {chi_dist.mean}")
    sigma2 = float(sum((chi_dist.offset + i) ** 2 * m for i, m in enumerate(chi_dist.masses)))
    limit = 1.0 / math.sqrt(2.0 * math.pi * sigma2)
    rows = []
    for n, law in _convolution_powers(chi_dist, n_list):
        exact = math.sqrt(n) * float(law.prob(0))
        rows.append({"n": n, "exact": exact, "limit": limit, "rel_err": abs(exact - limit) / limit})
    table = pd.DataFrame(rows, columns=["n", "exact", "limit", "rel_err"])
    if len(table):
        logger.info(f"1-d local limit: sigma^2={sigma2:.6f}, rel_err at n={table['n'].iloc[-1]}: "
                    f"{table['rel_err'].iloc[-1]:.5f}")
    return table


def period_detect(cfg: WalkConfig, N: int, n: int, seed: int) -> int:
    """
    gcd of the differences of chi(b_1 ... b_n) over N sampled words.
    Returns 0 when fewer than two words are sampled (or all values agree).
    """
    if not cfg.integer_chi:
        raise PreconditionError("period_detect needs integer chi values")
    if N < 2:
        return 0
    letters = sample_words(cfg, n, N, seed)
    values = cfg.int_chi_values[letters].sum(axis=1)
    period = int(np.gcd.reduce(np.abs(values - values[0])))
    logger.info(f"Detected chi lattice {period}Z from {N} words of length {n}")
    return period


def radon_stationary_residual(dist: LatticeDist, density: Callable[[int], Mass], levels: Iterable[int]) -> Mass:
    """
    max over `levels` of |(dist * nu)(k) - nu(k)| for nu = sum density(k) delta_k.
    Exact when `dist` is rational and `density` returns rationals.
    """
    worst: Mass = Fraction(0) if dist.rational else 0.0
    for k in levels:
        pushed = sum(m * density(k - (dist.offset + i)) for i, m in enumerate(dist.masses) if m)
        worst = max(worst, abs(pushed - density(k)))
    return worst


def exponential_stationary_base(dist: LatticeDist, tol: float = 1e-6) -> Optional[float]:
    """
    The base rho != 1 with sum_j m_j rho^(-j) = 1, so that sum rho^k delta_k
    is stationary; None when no such positive rho exists.
    """
    top = dist.offset + len(dist.masses) - 1
    shift = max(top, 0)
    # rho^shift * (sum_j m_j rho^-j - 1) as a polynomial in rho, highest degree first
    degree = shift - min(dist.offset, 0)
    if degree == 0:
        return None
    coeffs = np.zeros(degree + 1)
    for i, m in enumerate(dist.masses):
        coeffs[degree - (shift - dist.offset - i)] += float(m)
    coeffs[degree - shift] -= 1.0
    coeffs = np.trim_zeros(coeffs, "f")
    if len(coeffs) < 2:
        return None
    roots = np.roots(coeffs)
    real = sorted(r.real for r in roots if abs(r.imag) < tol and r.real > tol and abs(r.real - 1.0) > tol)
    return float(real[0]) if real else None


@dataclass
class JointLLTResult:
    """n p_n for the joint window event, with the centering and caps used."""

    table: pd.DataFrame
    lambda_hat: float
    metadata: Dict[str, object] = field(default_factory=dict)


def _joint_hits(cfg: WalkConfig, direction: np.ndarray, n: int, walkers: int, lambda_hat: float,
                U: Tuple[float, float], I: Tuple[float, float], rng: np.random.Generator) -> int:
    letters = cfg.sample_letters(rng, (walkers, n))
    v = np.tile(direction, (walkers, 1))
    log_norm = np.zeros(walkers)
    for j in range(n - 1, -1, -1):
        v = np.einsum("nij,nj->ni", cfg.matrices[letters[:, j]], v)
        norms = np.linalg.norm(v, axis=1)
        v /= norms[:, None]
        log_norm += np.log(norms)
    chi = cfg.chi_values[letters].sum(axis=1)
    centered = log_norm - n * lambda_hat
    inside = (centered >= U[0]) & (centered <= U[1]) & (chi >= I[0]) & (chi <= I[1])
    return int(inside.sum())


def joint_llt_estimate(cfg: WalkConfig, U_window: Tuple[float, float], I_window: Tuple[float, float],
                       n_list: Sequence[int], N: int, seed: int,
                       lambda_hat: Optional[float] = None,
                       lookahead: int = DEFAULT_LOOKAHEAD,
                       confidence: float = 0.95,
                       workers: Optional[int] = None) -> JointLLTResult:
    """
    Monte Carlo estimate of p_n = P(omega(sigma(b_1...b_n, xi)) - n lambda in U, chi(b_1...b_n) in I).

    omega(sigma(g, xi)) = log ||g v|| for v spanning the line of xi; xi is
    the lookahead flag of an independent word. The centering lambda comes
    from lyapunov_estimate unless given.

    Args:
        cfg: Walk configuration with d = 2
        U_window: Interval for the centered log-norm
        I_window: Interval for chi
        n_list: Word lengths (each <= JOINT_LLT_N_CAP)
        N: Words per n
        seed: Experiment seed

    Returns:
        JointLLTResult with columns n, p_hat, scaled, ci_lo, ci_hi, ci_too_wide
    """
    if cfg.dim != 2:
        raise PreconditionError(f"joint_llt_estimate is implemented for d = 2, got d = {cfg.dim}")
    n_list = [int(n) for n in n_list]
    if any(n < 1 or n > JOINT_LLT_N_CAP for n in n_list):
        raise PreconditionError(f"Word lengths must lie in 1..{JOINT_LLT_N_CAP}, got {n_list}")
    if N < 1:
        raise PreconditionError("N must be positive")
    if lambda_hat is None:
        lambda_hat = lyapunov_estimate(cfg, LYAPUNOV_CENTERING_N, LYAPUNOV_CENTERING_REPLICAS, seed).lambda_hat
    flag_word = cfg.sample_letters(stream_rng(seed, FLAG_STREAM), lookahead)
    flag, _ = lookahead_flag(cfg, flag_word, lookahead)
    direction = flag.line
    chunks = split_counts(N, max(1, -(-N // JOINT_CHUNK)))
    rows = []
    for idx, n in enumerate(n_list):
        counts = run_replicas(
            lambda i, _rng, n=n, idx=idx: _joint_hits(cfg, direction, n, chunks[i], lambda_hat,
                                                      U_window, I_window, stream_rng(seed, idx, i)),
            seed, len(chunks), workers)
        hits = int(sum(counts))
        lo, hi = wilson_interval(hits, N, confidence)
        p_hat = hits / N
        too_wide = hits == 0 or (hi - lo) > 0.5 * p_hat
        if too_wide and hits > 0:
            logger.warning(f"joint_llt n={n}: confidence interval too wide for N={N}")
        rows.append({"n": n, "p_hat": p_hat, "scaled": n * p_hat, "ci_lo": n * lo, "ci_hi": n * hi,
                     "ci_too_wide": bool(too_wide)})
        logger.info(f"joint_llt n={n}: p_hat={p_hat:.6g}, n p_hat={n * p_hat:.5f}")
    metadata = {"lambda_hat": lambda_hat, "n_cap": JOINT_LLT_N_CAP, "U_window": list(U_window),
                "I_window": list(I_window), "lookahead": lookahead}
    return JointLLTResult(pd.DataFrame(rows), lambda_hat, metadata)
