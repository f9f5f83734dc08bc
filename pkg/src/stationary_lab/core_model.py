"""
Exact model of the walk on T^d x R: integer matrices with a chi value,
walk configurations, torus points (exact or float) and the action
g.(x, t) = (g x mod 1, t + chi(g)).
"""

import json
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from pathlib import Path
from typing import Iterable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import ValidationError

from .exceptions import ConfigError, DimensionError, NumericalRangeError, PreconditionError

logger = logging.getLogger(__name__)

IntMatrix = Tuple[Tuple[int, ...], ...]

REFERENCE_MODEL_NAME = "ref-sl2"


def _int_det(entries: IntMatrix) -> int:
    """Exact determinant of an integer matrix (Bareiss elimination)."""
    m = [list(row) for row in entries]
    n = len(m)
    sign = 1
    prev = 1
    for k in range(n - 1):
        if m[k][k] == 0:
            swap = next((i for i in range(k + 1, n) if m[i][k] != 0), None)
            if swap is None:
                return 0
            m[k], m[swap] = m[swap], m[k]
            sign = -sign
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                m[i][j] = (m[i][j] * m[k][k] - m[i][k] * m[k][j]) // prev
        prev = m[k][k]
    return sign * m[n - 1][n - 1]


def _int_matmul(a: IntMatrix, b: IntMatrix) -> IntMatrix:
    n = len(a)
    cols = list(zip(*b))
    return tuple(tuple(sum(x * y for x, y in zip(a[i], cols[j])) for j in range(n)) for i in range(n))


def _int_adjugate(a: IntMatrix) -> IntMatrix:
    """Adjugate of an integer matrix; equals the inverse when det = 1."""
    n = len(a)
    if n == 1:
        return ((1,),)
    adj = [[0] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            minor = tuple(tuple(a[r][c] for c in range(n) if c != j) for r in range(n) if r != i)
            adj[j][i] = (-1) ** (i + j) * _int_det(minor)
    return tuple(tuple(row) for row in adj)


@dataclass(frozen=True)
class GroupElement:
    """An element of SL_d(Z) carrying its chi value."""

    entries: IntMatrix
    chi: float = 0.0

    def __post_init__(self):
        entries = tuple(tuple(int(v) for v in row) for row in self.entries)
        object.__setattr__(self, "entries", entries)
        d = len(entries)
        if d == 0 or any(len(row) != d for row in entries):
            raise DimensionError(f"Matrix must be square, got rows of lengths {[len(r) for r in entries]}")
        det = _int_det(entries)
        if det != 1:
            raise PreconditionError(f"Matrix {entries} has determinant {det}, expected 1")

    @property
    def dim(self) -> int:
        return len(self.entries)

    @classmethod
    def identity(cls, dim: int, chi: float = 0.0) -> "GroupElement":
        return cls(tuple(tuple(int(i == j) for j in range(dim)) for i in range(dim)), chi)

    def as_array(self) -> np.ndarray:
        """Float copy of the matrix; raises if an entry exceeds float range."""
        try:
            return np.array(self.entries, dtype=float)
        except OverflowError as e:
            raise NumericalRangeError(f"Matrix entries exceed float range: {e}") from e

    def inverse(self) -> "GroupElement":
        return GroupElement(_int_adjugate(self.entries), -self.chi)

    def __matmul__(self, other: "GroupElement") -> "GroupElement":
        if other.dim != self.dim:
            raise DimensionError(f"Cannot multiply {self.dim}x{self.dim} by {other.dim}x{other.dim}")
        return GroupElement(_int_matmul(self.entries, other.entries), self.chi + other.chi)

    def is_identity(self) -> bool:
        return all(v == int(i == j) for i, row in enumerate(self.entries) for j, v in enumerate(row))


@dataclass(frozen=True)
class TorusPoint:
    """
    A point of T^d, either exact (reduced fractions in [0, 1)) or float.
    Exact points are hashable and compare exactly.
    """

    coords: Tuple[Union[Fraction, float], ...]
    exact: bool = True

    def __post_init__(self):
        if self.exact:
            coords = tuple(Fraction(c) % 1 for c in self.coords)
        else:
            coords = tuple(_reduce_float(float(c)) for c in self.coords)
        object.__setattr__(self, "coords", coords)

    @classmethod
    def from_fractions(cls, *pairs: Tuple[int, int]) -> "TorusPoint":
        """Build an exact point from (numerator, denominator) pairs."""
        return cls(tuple(Fraction(num, den) for num, den in pairs), exact=True)

    @classmethod
    def from_floats(cls, values: Sequence[float]) -> "TorusPoint":
        return cls(tuple(float(v) for v in values), exact=False)

    @property
    def dim(self) -> int:
        return len(self.coords)

    @property
    def denominator(self) -> int:
        """Common denominator q of an exact point (lcm of the reduced denominators)."""
        if not self.exact:
            raise PreconditionError("Float torus points have no denominator")
        q = 1
        for c in self.coords:
            q = q * c.denominator // math.gcd(q, c.denominator)
        return q

    def pairs(self) -> List[Tuple[int, int]]:
        """(numerator, denominator) pairs of an exact point."""
        return [(c.numerator, c.denominator) for c in self.coords]

    def as_array(self) -> np.ndarray:
        return np.array([float(c) for c in self.coords])

    def to_float(self) -> "TorusPoint":
        return TorusPoint(tuple(float(c) for c in self.coords), exact=False)


def _reduce_float(value: float) -> float:
    reduced = value % 1.0
    # tiny negatives round up to exactly 1.0
    return 0.0 if reduced >= 1.0 else reduced


@dataclass(frozen=True)
class StateXT:
    """A state (x, t) of T^d x R."""

    x: TorusPoint
    t: float = 0.0

    @property
    def dim(self) -> int:
        return self.x.dim


@dataclass(frozen=True)
class Word:
    """A finite word b_1 ... b_n over generator indices."""

    letters: Tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "letters", tuple(int(i) for i in self.letters))

    def __len__(self) -> int:
        return len(self.letters)

    def __iter__(self) -> Iterator[int]:
        return iter(self.letters)

    def __getitem__(self, item):
        if isinstance(item, slice):
            return Word(self.letters[item])
        return self.letters[item]

    def __add__(self, other: "Word") -> "Word":
        return Word(self.letters + tuple(other))

    def validate(self, n_generators: int) -> None:
        bad = [i for i in self.letters if not 0 <= i < n_generators]
        if bad:
            raise PreconditionError(f"Word uses generator indices {bad} outside 0..{n_generators - 1}")


@dataclass(frozen=True)
class WalkConfig:
    """
    A finitely supported probability mu on SL_d(Z) with a chi value per
    generator. chi_* mu must be centered.
    """

    dim: int
    generators: Tuple[GroupElement, ...]
    probs: Tuple[float, ...]
    seed: int = 0
    name: str = "custom"
    strongly_irreducible: bool = True
    labels: Tuple[str, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "generators", tuple(self.generators))
        object.__setattr__(self, "probs", tuple(float(p) for p in self.probs))
        if self.dim < 2:
            raise ConfigError(f"dim must be at least 2, got {self.dim}")
        if not self.generators:
            raise ConfigError("At least one generator is required")
        if len(self.probs) != len(self.generators):
            raise ConfigError(f"{len(self.generators)} generators but {len(self.probs)} probabilities")
        for i, g in enumerate(self.generators):
            if g.dim != self.dim:
                raise ConfigError(f"Generator {i} is {g.dim}x{g.dim}, expected {self.dim}x{self.dim}")
        if any(p < 0 for p in self.probs):
            raise ConfigError("Probabilities must be nonnegative")
        if abs(math.fsum(self.probs) - 1.0) > 1e-12:
            raise ConfigError(f"Probabilities sum to {math.fsum(self.probs)}, expected 1")
        drift = math.fsum(p * g.chi for p, g in zip(self.probs, self.generators))
        if abs(drift) > 1e-12:
            raise ConfigError(f"chi_* mu is not centered: mean chi = {drift}")
        if not self.labels:
            object.__setattr__(self, "labels", tuple(f"g{i}" for i in range(len(self.generators))))

    @property
    def n_generators(self) -> int:
        return len(self.generators)

    @cached_property
    def chi_values(self) -> np.ndarray:
        return np.array([g.chi for g in self.generators], dtype=float)

    @cached_property
    def prob_array(self) -> np.ndarray:
        p = np.array(self.probs, dtype=float)
        return p / p.sum()

    @cached_property
    def matrices(self) -> np.ndarray:
        """Stacked float generator matrices, shape (k, d, d)."""
        return np.stack([g.as_array() for g in self.generators])

    @cached_property
    def inverse_matrices(self) -> np.ndarray:
        return np.stack([g.inverse().as_array() for g in self.generators])

    @property
    def integer_chi(self) -> bool:
        return all(float(g.chi).is_integer() for g in self.generators)

    @cached_property
    def int_chi_values(self) -> np.ndarray:
        if not self.integer_chi:
            raise PreconditionError("chi values are not integers")
        return np.array([int(g.chi) for g in self.generators], dtype=np.int64)

    @property
    def max_abs_chi(self) -> float:
        return float(np.max(np.abs(self.chi_values)))

    def sample_letters(self, rng: np.random.Generator, size) -> np.ndarray:
        """Draw i.i.d. generator indices according to probs."""
        return rng.choice(self.n_generators, size=size, p=self.prob_array)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "dim": self.dim,
            "generators": [[list(row) for row in g.entries] for g in self.generators],
            "probs": list(self.probs),
            "chi": [g.chi for g in self.generators],
            "seed": self.seed,
            "strongly_irreducible": self.strongly_irreducible,
        }


def reference_model(seed: int = 0) -> WalkConfig:
    """
    The reference model: g0 = [[1,2],[0,1]], g1 = [[1,0],[2,1]] and their
    inverses with probability 1/4 each; chi(g0) = 0, chi(g1) = 1.
    """
    g0 = GroupElement(((1, 2), (0, 1)), 0.0)
    g1 = GroupElement(((1, 0), (2, 1)), 1.0)
    return WalkConfig(
        dim=2,
        generators=(g0, g0.inverse(), g1, g1.inverse()),
        probs=(0.25, 0.25, 0.25, 0.25),
        seed=seed,
        name=REFERENCE_MODEL_NAME,
        labels=("g0", "g0^-1", "g1", "g1^-1"),
    )


def walk_config_from_mapping(data: dict) -> WalkConfig:
    """
    Build a WalkConfig from a parsed config mapping.

    Args:
        data: Mapping with keys dim, generators, probs, chi, seed (or model="ref-sl2")

    Returns:
        Validated WalkConfig
    """
    from ..models import ModelSpec

    if data.get("model") == REFERENCE_MODEL_NAME and "generators" not in data:
        return reference_model(seed=int(data.get("seed", 0)))
    try:
        spec = ModelSpec.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"Invalid walk model: {e}") from e
    try:
        generators = tuple(GroupElement(tuple(tuple(r) for r in rows), chi)
                           for rows, chi in zip(spec.generators, spec.chi))
        return WalkConfig(
            dim=spec.dim,
            generators=generators,
            probs=tuple(spec.probs),
            seed=spec.seed,
            name=spec.name,
            strongly_irreducible=spec.strongly_irreducible,
        )
    except PreconditionError as e:
        raise ConfigError(f"Invalid generator: {e}") from e


def load_walk_config(source: Union[str, Path]) -> WalkConfig:
    """
    Load a walk model by name ("ref-sl2") or from a JSON file.

    Args:
        source: Model name or path

    Returns:
        WalkConfig
    """
    if str(source) == REFERENCE_MODEL_NAME:
        return reference_model()
    path = Path(source)
    if not path.exists():
        raise ConfigError(f"Config file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"Cannot read config {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"Config {path} must contain a JSON object")
    cfg = walk_config_from_mapping(data)
    logger.info(f"Loaded walk model '{cfg.name}' from {path}: d={cfg.dim}, {cfg.n_generators} generators")
    return cfg


def apply(g: GroupElement, s: StateXT) -> StateXT:
    """
    g.(x, t) = (g x mod 1, t + chi(g)).

    Exact points use Fraction arithmetic (the common denominator is preserved);
    float points are reduced mod 1 after the step.
    """
    if g.dim != s.dim:
        raise DimensionError(f"Generator is {g.dim}x{g.dim} but point has dimension {s.dim}")
    x = s.x.coords
    if s.x.exact:
        image = tuple(sum((a * c for a, c in zip(row, x)), Fraction(0)) for row in g.entries)
        return StateXT(TorusPoint(image, exact=True), s.t + g.chi)
    image = g.as_array() @ np.array(x, dtype=float)
    return StateXT(TorusPoint(tuple(image), exact=False), s.t + g.chi)


def apply_exact_rational(entries: IntMatrix, x: Sequence[Fraction]) -> Tuple[Fraction, ...]:
    """Integer matrix times an exact vector, reduced mod 1."""
    return tuple(sum((a * c for a, c in zip(row, x)), Fraction(0)) % 1 for row in entries)


def chi_of_word(w: Union[Word, Iterable[int]], cfg: WalkConfig) -> float:
    """Sum of the letter chi values (exactly rounded)."""
    word = w if isinstance(w, Word) else Word(tuple(w))
    word.validate(cfg.n_generators)
    return math.fsum(cfg.generators[i].chi for i in word.letters)


def word_product(w: Union[Word, Iterable[int]], cfg: WalkConfig) -> GroupElement:
    """
    Exact product b_1 b_2 ... b_n in arbitrary-precision integers.

    Args:
        w: Nonempty word
        cfg: Walk configuration

    Returns:
        GroupElement whose chi is chi_of_word(w)
    """
    word = w if isinstance(w, Word) else Word(tuple(w))
    if len(word) == 0:
        raise PreconditionError("word_product needs a nonempty word")
    word.validate(cfg.n_generators)
    entries = cfg.generators[word[0]].entries
    for i in word.letters[1:]:
        entries = _int_matmul(entries, cfg.generators[i].entries)
    return GroupElement(entries, chi_of_word(word, cfg))
