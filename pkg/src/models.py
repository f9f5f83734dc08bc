"""Pydantic models for config files, run manifests and JSON reports."""

from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, Field, model_validator


class ModelSpec(BaseModel):
    """Schema of a walk-model config file."""
    name: str = Field("custom", description="Model name used in manifests")
    dim: int = Field(..., ge=2, description="Torus dimension d")
    generators: List[List[List[int]]] = Field(..., min_length=1, description="Integer generator matrices, row-major")
    probs: List[float] = Field(..., description="Generator probabilities")
    chi: List[float] = Field(..., description="chi value of each generator")
    seed: int = Field(0, description="Default RNG seed")
    strongly_irreducible: bool = Field(True, description="User assertion: the generated semigroup is strongly irreducible")
    workers: Optional[int] = Field(None, ge=1, description="Parallelism degree")
    params: Dict[str, Dict[str, Any]] = Field(default_factory=dict, description="Per-subcommand parameter overrides")

    @model_validator(mode="after")
    def check_shapes(self) -> "ModelSpec":
        if not (len(self.generators) == len(self.probs) == len(self.chi)):
            raise ValueError(
                f"generators ({len(self.generators)}), probs ({len(self.probs)}) and chi ({len(self.chi)}) must have equal length"
            )
        for i, rows in enumerate(self.generators):
            if len(rows) != self.dim or any(len(r) != self.dim for r in rows):
                raise ValueError(f"generator {i} is not {self.dim}x{self.dim}")
        return self


class PackageVersions(BaseModel):
    """Versions recorded for reproducibility."""
    python: str
    lab: str
    numpy: str
    scipy: str
    pandas: str
    networkx: str
    pydantic: str


class RunManifest(BaseModel):
    """Everything needed to re-run an experiment."""
    subcommand: str = Field(..., description="Experiment that produced this directory")
    config_hash: str = Field(..., description="SHA-256 of the canonical resolved config and parameters")
    config: Dict[str, Any] = Field(..., description="Resolved walk model")
    params: Dict[str, Any] = Field(default_factory=dict, description="Resolved experiment parameters")
    seed: int
    versions: PackageVersions
    wall_time_seconds: float
    timestamp: str
    outputs: List[str] = Field(default_factory=list, description="Data files written to the run directory")
    metadata: Dict[str, Any] = Field(default_factory=dict, description="Experiment-specific notes (caps, censoring)")


class OrbitReport(BaseModel):
    """Finite orbit of a rational torus point and its block components."""
    start: List[Tuple[int, int]] = Field(..., description="Start point as numerator/denominator pairs")
    denominator: int
    size: int
    points: List[List[Tuple[int, int]]] = Field(..., description="Orbit points as numerator/denominator pairs")
    modulus: int = Field(1, description="m used for the block components")
    components: List[List[Tuple[List[Tuple[int, int]], int]]] = Field(
        default_factory=list, description="Strongly connected components of (point, chi mod m)")
    stationarity_residual: str = Field("0", description="Exact residual of one walk step on the uniform orbit measure")

    class Config:
        json_schema_extra = {
            "example": {
                "start": [[1, 4], [0, 1]],
                "denominator": 4,
                "size": 2,
                "points": [[[1, 4], [0, 1]], [[1, 4], [1, 2]]],
                "modulus": 2,
                "components": [],
                "stationarity_residual": "0",
            }
        }
