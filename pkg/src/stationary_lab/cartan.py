"""
Log-scale linear algebra for long products of SL_d matrices: Cartan
projection, density points, the Iwasawa cocycle on flags, Lyapunov
estimation and the growth/contraction inequalities.

Singular values are recovered from the top singular value of each wedge
power, s_k = log sigma_1(wedge^k g), so that small singular values stay
accurate even when they are far below float resolution relative to the
largest one.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .config import (DEFAULT_LOOKAHEAD, FLAG_TOLERANCE, GAP_TOLERANCE, GROWTH_ABSOLUTE_FLOOR,
                     GROWTH_RELATIVE_SLACK, LOOKAHEAD_CHUNK, RENORMALIZE_EVERY)
from .core_model import GroupElement, WalkConfig, Word, _int_det
from .exceptions import GapError, NumericalRangeError, PreconditionError
from .utils import mean_confidence_interval, projective_distance, replica_rng, wedge_power

logger = logging.getLogger(__name__)

MatrixLike = Union[GroupElement, np.ndarray, Sequence[Sequence[float]]]


@dataclass
class CartanFrame:
    """
    kappa(g) with left/right singular bases: g = left diag(exp kappa) right^T.
    """

    kappa: np.ndarray
    left_basis: np.ndarray
    right_basis: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.kappa)

    def gap(self, r: int = 1) -> float:
        """kappa[r-1] - kappa[r] (the r-th simple root)."""
        return float(self.kappa[r - 1] - self.kappa[r])

    def reconstruct(self, log_shift: float = 0.0) -> np.ndarray:
        """left diag(exp(kappa - log_shift)) right^T."""
        return self.left_basis @ np.diag(np.exp(self.kappa - log_shift)) @ self.right_basis.T

    def transpose(self) -> "CartanFrame":
        return CartanFrame(self.kappa.copy(), self.right_basis.copy(), self.left_basis.copy())


@dataclass
class LogVector:
    """A vector stored as unit direction and log norm, safe under long products."""

    direction: np.ndarray
    log_norm: float

    def __post_init__(self):
        self.direction = np.asarray(self.direction, dtype=float)
        norm = np.linalg.norm(self.direction)
        if not np.isfinite(norm) or norm == 0.0:
            raise NumericalRangeError("LogVector direction must be a finite nonzero vector")
        if abs(norm - 1.0) > 1e-12:
            self.direction = self.direction / norm
            self.log_norm = self.log_norm + math.log(norm)

    @classmethod
    def from_vector(cls, v: Sequence[float]) -> "LogVector":
        v = np.asarray(v, dtype=float)
        norm = float(np.linalg.norm(v))
        if norm == 0.0:
            raise PreconditionError("Cannot represent the zero vector")
        return cls(v / norm, math.log(norm))

    def apply(self, matrix: np.ndarray) -> "LogVector":
        image = np.asarray(matrix, dtype=float) @ self.direction
        norm = float(np.linalg.norm(image))
        if norm == 0.0 or not np.isfinite(norm):
            raise NumericalRangeError("Vector left float range under transport")
        return LogVector(image / norm, self.log_norm + math.log(norm))

    def transport(self, matrices: Iterable[np.ndarray]) -> "LogVector":
        """Apply matrices in the given order (first element acts first)."""
        out = self
        for m in matrices:
            out = out.apply(m)
        return out

    def to_vector(self) -> np.ndarray:
        return self.direction * math.exp(self.log_norm)

    @property
    def norm(self) -> float:
        return math.exp(self.log_norm)


@dataclass
class Flag:
    """Complete flag V_1 < ... < V_{d-1}: V_k is spanned by the first k columns of `basis`."""

    basis: np.ndarray

    def __post_init__(self):
        self.basis = np.asarray(self.basis, dtype=float)
        d = self.basis.shape[0]
        if self.basis.shape != (d, d):
            raise PreconditionError(f"Flag basis must be square, got {self.basis.shape}")
        if np.max(np.abs(self.basis.T @ self.basis - np.eye(d))) > FLAG_TOLERANCE:
            raise PreconditionError("Flag basis is not orthonormal")

    @classmethod
    def standard(cls, dim: int) -> "Flag":
        return cls(np.eye(dim))

    @classmethod
    def from_vectors(cls, vectors: np.ndarray) -> "Flag":
        """Gram-Schmidt on the columns of `vectors` (nestedness is preserved)."""
        return cls(_orthonormalize(np.asarray(vectors, dtype=float)))

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    def subspace(self, k: int) -> np.ndarray:
        return self.basis[:, :k]

    @property
    def line(self) -> np.ndarray:
        return self.basis[:, 0]

    def transport(self, g: MatrixLike) -> "Flag":
        """g . xi, re-orthonormalized."""
        return Flag(_orthonormalize(_as_float_matrix(g) @ self.basis))


def _orthonormalize(vectors: np.ndarray) -> np.ndarray:
    q, r = np.linalg.qr(vectors)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def _as_float_matrix(g: MatrixLike) -> np.ndarray:
    if isinstance(g, GroupElement):
        return g.as_array()
    arr = np.asarray(g, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise PreconditionError(f"Expected a square matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NumericalRangeError("Matrix has non-finite entries; renormalize before projecting")
    return arr


def _log_abs_det(g: MatrixLike, arr: np.ndarray) -> float:
    if isinstance(g, GroupElement):
        return 0.0
    if np.all(arr == np.round(arr)) and np.max(np.abs(arr)) < 2.0**53:
        det = _int_det(tuple(tuple(int(v) for v in row) for row in arr))
        if det == 0:
            raise PreconditionError("Matrix is singular")
        return math.log(abs(det))
    sign, logdet = np.linalg.slogdet(arr)
    if sign == 0:
        raise PreconditionError("Matrix is singular")
    return float(logdet)


def kappa_from_log_wedges(s: np.ndarray, log_det: float = 0.0) -> np.ndarray:
    """kappa_k = s_k - s_{k-1} with s_0 = 0 and s_d = log|det|; works on stacks (..., d-1)."""
    s = np.asarray(s, dtype=float)
    zeros = np.zeros(s.shape[:-1] + (1,))
    full = np.concatenate([zeros, s, zeros + log_det], axis=-1)
    return np.diff(full, axis=-1)


def cartan_projection(g: MatrixLike) -> CartanFrame:
    """
    Cartan projection via the singular value decomposition.

    Args:
        g: Invertible matrix (GroupElement or float array)

    Returns:
        CartanFrame with kappa sorted nonincreasing
    """
    arr = _as_float_matrix(g)
    d = arr.shape[0]
    log_det = _log_abs_det(g, arr)
    u, sv, vt = np.linalg.svd(arr)
    if sv[0] == 0.0:
        raise PreconditionError("Matrix is singular")
    s = np.array([math.log(sv[0])] + [math.log(np.linalg.norm(wedge_power(arr, k), 2)) for k in range(2, d)])
    kappa = kappa_from_log_wedges(s, log_det)
    if not np.all(np.isfinite(kappa)):
        raise NumericalRangeError("Singular values outside float range")
    return CartanFrame(kappa, u, vt.T)


@lru_cache(maxsize=32)
def _generator_wedges(cfg: WalkConfig) -> Tuple[np.ndarray, ...]:
    """wedge^k of every generator for k = 1..d-1, each of shape (n_gen, C(d,k), C(d,k))."""
    return tuple(wedge_power(cfg.matrices, k) for k in range(1, cfg.dim))


@dataclass
class BatchedProducts:
    """Log wedge norms s (N, d-1) and the normalized product (N, d, d) at one checkpoint."""

    s: np.ndarray
    top: np.ndarray
    log_scale: np.ndarray

    @property
    def kappa(self) -> np.ndarray:
        return kappa_from_log_wedges(self.s)


def batched_products(cfg: WalkConfig,
                     letters: np.ndarray,
                     checkpoints: Iterable[int],
                     side: str = "right",
                     renormalize_every: int = RENORMALIZE_EVERY) -> Dict[int, BatchedProducts]:
    """
    Products of N words at once, renormalized every few steps.

    Args:
        cfg: Walk configuration
        letters: Integer array (N, n) of generator indices
        checkpoints: Prefix lengths at which to record the product
        side: "right" builds b_1 ... b_j, "left" builds b_j ... b_1
        renormalize_every: Steps between renormalizations

    Returns:
        Dict mapping each checkpoint to its BatchedProducts
    """
    letters = np.atleast_2d(np.asarray(letters, dtype=np.int64))
    n_rep, n = letters.shape
    wanted = sorted(set(int(c) for c in checkpoints))
    if wanted and (wanted[0] < 0 or wanted[-1] > n):
        raise PreconditionError(f"Checkpoints must lie in [0, {n}]")
    wanted_set = set(wanted)
    wedges = _generator_wedges(cfg)
    mats = [np.tile(np.eye(w.shape[-1]), (n_rep, 1, 1)) for w in wedges]
    logs = np.zeros((n_rep, len(wedges)))
    out: Dict[int, BatchedProducts] = {}

    def record(j: int) -> None:
        s = np.empty_like(logs)
        for k, m in enumerate(mats):
            s[:, k] = logs[:, k] + np.log(np.linalg.norm(m, 2, axis=(1, 2)))
        out[j] = BatchedProducts(s=s, top=mats[0].copy(), log_scale=logs[:, 0].copy())

    if 0 in wanted_set:
        record(0)
    for j in range(n):
        step = letters[:, j]
        for k, w in enumerate(wedges):
            mats[k] = mats[k] @ w[step] if side == "right" else w[step] @ mats[k]
        if (j + 1) % renormalize_every == 0 or (j + 1) in wanted_set:
            for k in range(len(mats)):
                scale = np.abs(mats[k]).max(axis=(1, 2))
                mats[k] = mats[k] / scale[:, None, None]
                logs[:, k] += np.log(scale)
        if (j + 1) in wanted_set:
            record(j + 1)
    return out


def renormalized_product(word: Union[Word, Sequence[int]], cfg: WalkConfig) -> Tuple[CartanFrame, float]:
    """
    Cartan frame of b_1 ... b_n without overflow.

    Every step the running wedge powers are divided by their largest entry
    and the log scales accumulated.

    Args:
        word: Generator indices
        cfg: Walk configuration

    Returns:
        (CartanFrame of the product, accumulated log scale of the first wedge power)
    """
    letters = np.asarray(tuple(word), dtype=np.int64)
    Word(tuple(letters)).validate(cfg.n_generators)
    n = len(letters)
    result = batched_products(cfg, letters[None, :], [n], renormalize_every=1)[n]
    kappa = result.kappa[0]
    u, _, vt = np.linalg.svd(result.top[0])
    return CartanFrame(kappa, u, vt.T), float(result.log_scale[0])


_TREE_CHUNK = 1 << 15


def _tree_reduce(mats: np.ndarray, logs: np.ndarray) -> Tuple[np.ndarray, float]:
    """Pairwise ordered product of a stack with per-level renormalization."""
    d = mats.shape[-1]
    while len(mats) > 1:
        if len(mats) % 2:
            mats = np.concatenate([mats, np.eye(d)[None]])
            logs = np.append(logs, 0.0)
        mats = mats[0::2] @ mats[1::2]
        logs = logs[0::2] + logs[1::2]
        scale = np.abs(mats).max(axis=(1, 2))
        mats = mats / scale[:, None, None]
        logs = logs + np.log(scale)
    return mats[0], float(logs[0])


def log_operator_norm(cfg: WalkConfig, letters: Sequence[int]) -> float:
    """
    log ||b_1 ... b_n|| for long words, by chunked tree reduction.
    The empty word has log norm 0.
    """
    letters = np.asarray(letters, dtype=np.int64)
    if letters.size == 0:
        return 0.0
    partial_mats, partial_logs = [], []
    for start in range(0, letters.size, _TREE_CHUNK):
        chunk = letters[start:start + _TREE_CHUNK]
        m, s = _tree_reduce(cfg.matrices[chunk], np.zeros(len(chunk)))
        partial_mats.append(m)
        partial_logs.append(s)
    m, s = _tree_reduce(np.stack(partial_mats), np.array(partial_logs))
    return s + math.log(np.linalg.norm(m, 2))


def _require_nondegenerate(cfg: WalkConfig) -> None:
    if not cfg.strongly_irreducible:
        raise PreconditionError(f"Model '{cfg.name}' is not asserted strongly irreducible")
    if all(g.is_identity() for g in cfg.generators):
        raise PreconditionError("All generators are the identity; the walk is not strongly irreducible")


@dataclass
class LyapunovEstimate:
    """Estimate of the top exponent and of the Lyapunov vector kappa/n."""

    lambda_hat: float
    ci_lo: float
    ci_hi: float
    sigma_vector: np.ndarray
    n: int
    replicas: int
    samples: np.ndarray = field(repr=False, default=None)

    @property
    def ci(self) -> Tuple[float, float]:
        return self.ci_lo, self.ci_hi

    @property
    def ci_width(self) -> float:
        return self.ci_hi - self.ci_lo

    def __iter__(self) -> Iterator:
        return iter((self.lambda_hat, self.ci))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([{"n": self.n, "N": self.replicas, "lambda_hat": self.lambda_hat,
                              "ci_lo": self.ci_lo, "ci_hi": self.ci_hi}])


def sample_words(cfg: WalkConfig, length: int, replicas: int, seed: int, independent: bool = True) -> np.ndarray:
    """Letters (replicas, length); replica i uses stream (seed, i), or stream (seed, 0) for all."""
    rows = [cfg.sample_letters(replica_rng(seed, i if independent else 0), length) for i in range(replicas)]
    return np.asarray(rows, dtype=np.int64).reshape(replicas, length)


def lyapunov_estimate(cfg: WalkConfig, n: int, N: int, seed: int,
                      independent: bool = True, confidence: float = 0.95) -> LyapunovEstimate:
    """
    Mean and confidence interval of kappa_1(b_1...b_n)/n over N products.

    Args:
        cfg: Walk configuration
        n: Word length (>= 100)
        N: Number of products (>= 30)
        seed: Experiment seed
        independent: If False every replica reuses the same stream

    Returns:
        LyapunovEstimate (unpacks as (lambda_hat, ci))
    """
    if n < 100 or N < 30:
        raise PreconditionError(f"lyapunov_estimate needs n >= 100 and N >= 30, got n={n}, N={N}")
    _require_nondegenerate(cfg)
    letters = sample_words(cfg, n, N, seed, independent)
    kappa = batched_products(cfg, letters, [n])[n].kappa / n
    mean, lo, hi = mean_confidence_interval(kappa[:, 0], confidence)
    logger.info(f"Lyapunov estimate n={n}, N={N}: {mean:.6f} [{lo:.6f}, {hi:.6f}]")
    return LyapunovEstimate(mean, lo, hi, kappa.mean(axis=0), n, N, kappa[:, 0])


@dataclass
class LyapunovSpectrum:
    """Full exponent vector estimated by QR accumulation."""

    exponents: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    n: int
    replicas: int


def lyapunov_spectrum(cfg: WalkConfig, n: int, N: int, seed: int, confidence: float = 0.95) -> LyapunovSpectrum:
    """
    All Lyapunov exponents from log|diag R| of repeated QR factorizations
    along b_n ... b_1 applied to an orthonormal frame.
    """
    if n < 1 or N < 2:
        raise PreconditionError("lyapunov_spectrum needs n >= 1 and N >= 2")
    _require_nondegenerate(cfg)
    letters = sample_words(cfg, n, N, seed)
    q = np.tile(np.eye(cfg.dim), (N, 1, 1))
    acc = np.zeros((N, cfg.dim))
    for j in range(n):
        q, r = np.linalg.qr(cfg.matrices[letters[:, j]] @ q)
        acc += np.log(np.abs(np.diagonal(r, axis1=1, axis2=2)))
    per_rep = acc / n
    stats = [mean_confidence_interval(per_rep[:, i], confidence) for i in range(cfg.dim)]
    return LyapunovSpectrum(np.array([s[0] for s in stats]), np.array([s[1] for s in stats]),
                            np.array([s[2] for s in stats]), n, N)


def iwasawa_cocycle(g: MatrixLike, xi: Flag) -> np.ndarray:
    """
    sigma(g, xi) in a: x_1 + ... + x_k = log ||wedge^k g w_k|| / ||w_k||
    for w_k the wedge of an orthonormal basis of V_k.

    Realized by one QR factorization of g times the flag basis: the
    partial products of |diag R| are exactly the wedge norm ratios.
    """
    arr = _as_float_matrix(g)
    if xi.dim != arr.shape[0]:
        raise PreconditionError(f"Flag dimension {xi.dim} does not match matrix size {arr.shape[0]}")
    _, r = np.linalg.qr(arr @ xi.basis)
    diag = np.abs(np.diag(r))
    if np.any(diag == 0.0) or not np.all(np.isfinite(diag)):
        raise NumericalRangeError("Wedge norm underflow in Iwasawa cocycle")
    return np.log(diag)


def cocycle_along(matrices: np.ndarray, xi: Flag) -> Tuple[np.ndarray, Flag]:
    """
    sigma(h_1 ... h_n, xi) by the cocycle identity, transporting the flag
    from the right: h_n acts first.

    Args:
        matrices: Array (n, d, d) of h_1 .. h_n
        xi: Flag the product acts on

    Returns:
        (a-vector, flag (h_1 ... h_n) . xi)
    """
    total = np.zeros(xi.dim)
    basis = xi.basis
    for h in matrices[::-1]:
        q, r = np.linalg.qr(h @ basis)
        diag = np.diag(r)
        if np.any(diag == 0.0):
            raise NumericalRangeError("Wedge norm underflow in Iwasawa cocycle")
        total += np.log(np.abs(diag))
        basis = q * np.sign(diag)
    return total, Flag(basis)


def batched_cocycle(matrices: np.ndarray, letters: np.ndarray, basis: np.ndarray) -> np.ndarray:
    """
    sigma(b_1 ... b_n, xi) for a batch of words (N, n) and one flag basis;
    returns an array (N, d).
    """
    n_rep, n = letters.shape
    q = np.tile(basis, (n_rep, 1, 1))
    total = np.zeros((n_rep, basis.shape[0]))
    for j in range(n - 1, -1, -1):
        q, r = np.linalg.qr(matrices[letters[:, j]] @ q)
        diag = np.diagonal(r, axis1=1, axis2=2)
        total += np.log(np.abs(diag))
        q = q * np.sign(diag)[:, None, :]
    return total


def density_points(frame: CartanFrame, r: int = 1) -> Tuple[np.ndarray, np.ndarray]:
    """
    xi_plus = top-r left singular subspace; V_minus = orthocomplement of the
    top-r right singular subspace.

    Raises:
        GapError: kappa[r-1] - kappa[r] <= GAP_TOLERANCE
    """
    if not 1 <= r < frame.dim:
        raise PreconditionError(f"r must lie in 1..{frame.dim - 1}")
    if frame.gap(r) <= GAP_TOLERANCE:
        raise GapError(f"No singular gap at r={r}: kappa={frame.kappa}")
    return frame.left_basis[:, :r].copy(), frame.right_basis[:, r:].copy()


@dataclass
class GrowthContractionReport:
    """Both sides of the growth and contraction inequalities for one (g, v)."""

    norm_v: float
    norm_gv: float
    lower_bound: float
    upper_bound: float
    distance_to_v_minus: float
    contraction_distance: float
    contraction_bound: float
    violations: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def check_growth_contraction(g: MatrixLike, v: Sequence[float]) -> GrowthContractionReport:
    """
    Check, for the standard representation (r = 1):

        e^{kappa_1} ||v|| d(Rv, V-) <= ||g v|| <= e^{kappa_1} ||v||
        d(g Rv, W+) <= max_i e^{-(kappa_i - kappa_{i+1})} / d(Rv, V-)

    Args:
        g: Matrix with a singular gap
        v: Nonzero vector

    Returns:
        GrowthContractionReport; `violations` lists any inequality broken
        beyond the relative slack
    """
    v = np.asarray(v, dtype=float)
    norm_v = float(np.linalg.norm(v))
    if norm_v == 0.0:
        raise PreconditionError("v must be nonzero")
    frame = cartan_projection(g)
    xi_plus, _ = density_points(frame, 1)
    arr = _as_float_matrix(g)
    gv = arr @ v
    norm_gv = float(np.linalg.norm(gv))
    top = math.exp(frame.kappa[0])
    dist_minus = abs(float(frame.right_basis[:, 0] @ v)) / norm_v
    upper = top * norm_v
    lower = upper * dist_minus
    contraction = float(projective_distance(gv, xi_plus[:, 0]))
    worst_root = float(np.max(np.exp(np.diff(frame.kappa))))
    bound = math.inf if dist_minus == 0.0 else worst_root / dist_minus

    violations = []
    rel = GROWTH_RELATIVE_SLACK
    if lower > norm_gv * (1 + rel) + GROWTH_ABSOLUTE_FLOOR * upper:
        violations.append(f"growth lower bound: {lower!r} > {norm_gv!r}")
    if norm_gv > upper * (1 + rel):
        violations.append(f"growth upper bound: {norm_gv!r} > {upper!r}")
    if contraction > bound * (1 + rel) + GROWTH_ABSOLUTE_FLOOR:
        violations.append(f"contraction: {contraction!r} > {bound!r}")
    if violations:
        logger.warning(f"Growth/contraction violation for v={v}: {violations}")
    return GrowthContractionReport(norm_v, norm_gv, lower, upper, dist_minus, contraction, bound, violations)


def lookahead_flag(cfg: WalkConfig, letters: Sequence[int], m: int = DEFAULT_LOOKAHEAD) -> Tuple[Flag, int]:
    """
    Approximate the limit flag of a word tail by the left singular flag of
    its first letters, extending in chunks until the top direction moves by
    less than FLAG_TOLERANCE or m letters are used.

    Returns:
        (flag, number of letters used)
    """
    letters = np.asarray(letters, dtype=np.int64)[:m]
    if len(letters) == 0:
        raise PreconditionError("Lookahead needs at least one letter")
    checkpoints = list(range(min(LOOKAHEAD_CHUNK, len(letters)), len(letters) + 1, LOOKAHEAD_CHUNK))
    if checkpoints[-1] != len(letters):
        checkpoints.append(len(letters))
    products = batched_products(cfg, letters[None, :], checkpoints, renormalize_every=1)
    previous = None
    used = checkpoints[-1]
    for c in checkpoints:
        u, _, _ = np.linalg.svd(products[c].top[0])
        if previous is not None and projective_distance(previous, u[:, 0]) < FLAG_TOLERANCE:
            used = c
            break
        previous = u[:, 0]
    result = products[used]
    kappa = result.kappa[0]
    if np.any(np.diff(kappa) >= -GAP_TOLERANCE):
        raise GapError(f"Lookahead product of length {used} has no singular gap: kappa={kappa}")
    u, _, _ = np.linalg.svd(result.top[0])
    return Flag(_orthonormalize(u)), used


def theta_n(cfg: WalkConfig, b_word: Union[Word, Sequence[int]], n: int, m: int = DEFAULT_LOOKAHEAD) -> np.ndarray:
    """
    theta_n(b) = sigma(b_1 ... b_n, xi_{T^n b}), with xi_{T^n b} approximated
    by the lookahead flag of b_{n+1} ... b_{n+m}.

    Args:
        cfg: Walk configuration
        b_word: Word of length >= n + m
        n: Number of cocycle terms
        m: Lookahead length

    Returns:
        a-vector of length d
    """
    letters = np.asarray(tuple(b_word), dtype=np.int64)
    if len(letters) < n + m:
        raise PreconditionError(f"theta_n needs a word of length >= n + m = {n + m}, got {len(letters)}")
    if n == 0:
        return np.zeros(cfg.dim)
    flag, _ = lookahead_flag(cfg, letters[n:n + m], m)
    total, _ = cocycle_along(cfg.matrices[letters[:n]], flag)
    return total


@dataclass
class DensityConvergence:
    """Medians of d(xi+_{b_1..b_n}, xi+_{b_1..b_2n}) and the fitted exponential rate."""

    table: pd.DataFrame
    rate: float
    dropped: Dict[int, int]


def density_convergence(cfg: WalkConfig, n_list: Sequence[int], N: int, seed: int) -> DensityConvergence:
    """
    Exponential convergence of the density points xi+ of b_1 ... b_n.

    Args:
        cfg: Walk configuration
        n_list: Prefix lengths
        N: Replicas
        seed: Experiment seed

    Returns:
        DensityConvergence with columns n, median, rate
    """
    n_list = sorted(int(n) for n in n_list)
    if not n_list or n_list[0] < 1:
        raise PreconditionError("n_list must contain positive lengths")
    _require_nondegenerate(cfg)
    letters = sample_words(cfg, 2 * n_list[-1], N, seed)
    checkpoints = set(n_list) | {2 * n for n in n_list}
    products = batched_products(cfg, letters, checkpoints)
    medians, dropped = [], {}
    for n in n_list:
        short, long = products[n], products[2 * n]
        ok = (np.diff(short.kappa, axis=1)[:, 0] < -GAP_TOLERANCE) & (np.diff(long.kappa, axis=1)[:, 0] < -GAP_TOLERANCE)
        dropped[n] = int((~ok).sum())
        if dropped[n]:
            logger.warning(f"density_convergence n={n}: dropped {dropped[n]} samples without singular gap")
        u_short = np.linalg.svd(short.top[ok])[0][:, :, 0]
        u_long = np.linalg.svd(long.top[ok])[0][:, :, 0]
        dist = projective_distance(u_short, u_long)
        medians.append(float(np.median(dist)) if dist.size else float("nan"))
    ns = np.array(n_list, dtype=float)
    med = np.array(medians)
    mask = np.isfinite(med) & (med > 1e-15)
    if mask.sum() >= 2:
        slope, _ = np.polyfit(ns[mask], np.log(med[mask]), 1)
        rate = float(-slope)
    else:
        rate = float("nan")
    logger.info(f"Density point convergence rate: {rate:.4f}")
    table = pd.DataFrame({"n": n_list, "median": medians, "rate": rate})
    return DensityConvergence(table, rate, dropped)


def growth_lower_bound(cfg: WalkConfig, k: int, horizon: int, N: int, seed: int, lambda_hat: float) -> float:
    """
    Fraction of trajectories with ||b_n ... b_1|| >= exp(n lambda_hat / 2)
    for every n in [k, horizon].
    """
    if not 1 <= k <= horizon:
        raise PreconditionError("Need 1 <= k <= horizon")
    letters = sample_words(cfg, horizon, N, seed)
    products = batched_products(cfg, letters, range(k, horizon + 1), side="left")
    good = np.ones(N, dtype=bool)
    for n in range(k, horizon + 1):
        good &= products[n].s[:, 0] >= n * lambda_hat / 2.0
    fraction = float(good.mean())
    logger.info(f"Growth lower bound from k={k}: fraction {fraction:.4f}")
    return fraction
