"""Configuration management: environment settings and per-subcommand experiment parameters."""

import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields
from typing import Any, ClassVar, Dict, Mapping, Optional, Sequence, Tuple, Type

from .stationary_lab.exceptions import ConfigError

logger = logging.getLogger(__name__)

REFERENCE_START = "0.37796447300922725,0.6115006341236424"


@dataclass
class LabSettings:
    """Settings read from the environment at construction."""

    output_dir: str = field(default_factory=lambda: os.getenv("STATIONARY_LAB_OUTPUT_DIR", "./runs"))
    workers: Optional[int] = field(default_factory=lambda: _env_int("STATIONARY_LAB_WORKERS"))
    log_level: str = field(default_factory=lambda: os.getenv("STATIONARY_LAB_LOG_LEVEL", "INFO").upper())

    def __post_init__(self):
        if self.workers is None:
            self.workers = os.cpu_count() or 1
        if self.workers < 1:
            raise ConfigError(f"workers must be positive, got {self.workers}")


def _env_int(name: str) -> Optional[int]:
    value = os.getenv(name)
    if value is None or value == "":
        return None
    try:
        return int(value)
    except ValueError as e:
        raise ConfigError(f"{name} must be an integer, got {value!r}") from e


@dataclass
class SimulateParams:
    """Trajectory of the walk from `start` ("1/4,0" is exact, decimals are float)."""
    REPLICAS: ClassVar[Optional[str]] = None
    start: str = REFERENCE_START
    t0: float = 0.0
    n: int = 10_000


@dataclass
class OrbitParams:
    REPLICAS: ClassVar[Optional[str]] = None
    x: str = "1/4,0"
    modulus: int = 2


@dataclass
class LyapunovParams:
    """Top exponent, full spectrum and density-point convergence."""
    REPLICAS: ClassVar[Optional[str]] = "N"
    n: int = 10_000
    N: int = 100
    density_n_list: Tuple[int, ...] = (5, 10, 20, 40)
    density_N: int = 500


@dataclass
class CartanCheckParams:
    """Growth/contraction inequalities on random (g, v)."""
    REPLICAS: ClassVar[Optional[str]] = "samples"
    samples: int = 10_000
    max_length: int = 30


@dataclass
class TailParams:
    REPLICAS: ClassVar[Optional[str]] = "N"
    kmax: int = 10_000
    N: int = 100_000
    cap: int = 10_000_000
    window: Tuple[int, int] = (100, 10_000)
    oracle_kmax: int = 20
    heavy_tail: bool = True
    heavy_N_list: Tuple[int, ...] = (1_000, 10_000, 100_000)
    conservativity: bool = True
    start: str = REFERENCE_START
    return_radius: float = 0.5
    horizons: Tuple[int, ...] = (10, 100, 1_000)
    conservativity_N: int = 2_000


@dataclass
class CertifyParams:
    """k = 0 searches k = 1 .. k_max."""
    REPLICAS: ClassVar[Optional[str]] = "N"
    delta: float = 0.05
    k: int = 0
    k_max: int = 8
    grid_per_axis: int = 8
    N: int = 2_000
    cap: int = 1_000_000
    confidence: float = 0.95


@dataclass
class LLT1dParams:
    REPLICAS: ClassVar[Optional[str]] = None
    n_list: Tuple[int, ...] = (10, 100, 1_000, 10_000)
    rational: bool = False
    return_kmax: int = 20


@dataclass
class JointLLTParams:
    REPLICAS: ClassVar[Optional[str]] = "N"
    n_list: Tuple[int, ...] = (100, 200, 400)
    N: int = 1_000_000
    U: Tuple[float, float] = (-1.0, 1.0)
    I: Tuple[float, float] = (-1.5, 1.5)
    lookahead: int = 200


@dataclass
class AnglesParams:
    REPLICAS: ClassVar[Optional[str]] = "N"
    n: int = 30
    N: int = 1_000
    budget: int = 10_000_000
    U: Tuple[float, ...] = (-1.0, 1.0)
    I: Tuple[float, float] = (-1.5, 1.5)
    lookahead: int = 200


@dataclass
class DriftParams:
    REPLICAS: ClassVar[Optional[str]] = "N_per_direction"
    u_norm: float = 1e-6
    directions: int = 32
    N_per_direction: int = 200
    eps1: float = 1e-3
    eps2: float = 1e-1
    n_max: int = 60
    budget: int = 1_000_000
    calibration_n: int = 20
    U: Tuple[float, ...] = (-1.0, 1.0)
    I: Tuple[float, float] = (-1.5, 1.5)
    lookahead: int = 200


@dataclass
class EquidistParams:
    REPLICAS: ClassVar[Optional[str]] = "N"
    n_list: Tuple[int, ...] = (20, 40, 80)
    partition: Tuple[int, ...] = (2, 3)     # one count per U axis, then one for I
    N: int = 1_000
    budget: int = 1_000_000
    U: Tuple[float, ...] = (-1.0, 1.0)
    I: Tuple[float, float] = (-1.5, 1.5)
    lookahead: int = 200


@dataclass
class WeylParams:
    """Weyl sums and real-marginal invariance of a post-burn-in trajectory."""
    REPLICAS: ClassVar[Optional[str]] = None
    start: str = REFERENCE_START
    n: int = 101_000
    burn_in: int = 1_000
    kmax: int = 3
    bins: int = 40
    window: Tuple[float, float] = (-20.0, 20.0)
    pushforward_size: int = 200
    pushforward_checkpoints: Tuple[int, ...] = (0, 10, 100, 1_000)


SUBCOMMAND_PARAMS: Dict[str, Type] = {
    "simulate": SimulateParams,
    "orbit": OrbitParams,
    "lyapunov": LyapunovParams,
    "cartan-check": CartanCheckParams,
    "tail": TailParams,
    "certify": CertifyParams,
    "llt1d": LLT1dParams,
    "jointllt": JointLLTParams,
    "angles": AnglesParams,
    "drift": DriftParams,
    "equidist": EquidistParams,
    "weyl": WeylParams,
}


def _coerce(name: str, value: Any, default: Any) -> Any:
    try:
        if isinstance(default, bool):
            if isinstance(value, str):
                if value.lower() not in ("true", "false", "1", "0"):
                    raise ValueError(value)
                return value.lower() in ("true", "1")
            return bool(value)
        if isinstance(default, int):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        if isinstance(default, float):
            return float(value)
        if isinstance(default, tuple):
            if not isinstance(value, (list, tuple)):
                raise ValueError(value)
            kind = type(default[0]) if default else float
            return tuple(kind(v) for v in value)
        return str(value)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Parameter {name}={value!r} does not match the type of its default {default!r}") from e


def parse_override(text: str) -> Tuple[str, Any]:
    """Split `key=value`; the value is read as JSON when possible, else kept as a string."""
    if "=" not in text:
        raise ConfigError(f"Override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def resolve_params(subcommand: str, file_params: Optional[Mapping[str, Any]] = None,
                   overrides: Sequence[str] = (), replicas: Optional[int] = None):
    """
    Build the parameter dataclass of a subcommand.

    Precedence: dataclass defaults < `params.<subcommand>` of the config
    file < --replicas < --set key=value.

    Args:
        subcommand: Subcommand name
        file_params: Mapping from the config file's params section
        overrides: `key=value` strings
        replicas: Value for the subcommand's replica-count field

    Returns:
        Parameter dataclass instance
    """
    if subcommand not in SUBCOMMAND_PARAMS:
        raise ConfigError(f"Unknown subcommand {subcommand!r}")
    cls = SUBCOMMAND_PARAMS[subcommand]
    defaults = {f.name: f.default for f in fields(cls)}
    values = dict(defaults)
    layers = [dict((file_params or {}).get(subcommand, {}))]
    if replicas is not None:
        if cls.REPLICAS is None:
            logger.warning(f"--replicas has no effect on {subcommand}")
        else:
            layers.append({cls.REPLICAS: replicas})
    layers.append(dict(parse_override(o) for o in overrides))
    for layer in layers:
        for key, value in layer.items():
            if key not in defaults:
                raise ConfigError(f"Unknown parameter {key!r} for {subcommand}; known: {sorted(defaults)}")
            values[key] = _coerce(key, value, defaults[key])
    return cls(**values)


def params_dict(params) -> Dict[str, Any]:
    return asdict(params)
