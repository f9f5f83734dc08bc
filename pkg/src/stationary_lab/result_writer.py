"""Write experiment outputs (CSV, JSON, markdown summary, manifest) to a run directory"""

import hashlib
import json
import logging
import platform
import shutil
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel

from ..models import PackageVersions, RunManifest
from .walk_sim import FLOAT_FORMAT

logger = logging.getLogger(__name__)

JSONable = Union[Dict[str, Any], List[Any], BaseModel]


def _to_builtin(value: Any) -> Any:
    """numpy scalars/arrays, tuples and Fractions to JSON-friendly builtins."""
    if isinstance(value, BaseModel):
        return value.model_dump(mode="json")
    if isinstance(value, dict):
        return {str(k): _to_builtin(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_to_builtin(v) for v in value]
    if isinstance(value, np.ndarray):
        return _to_builtin(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, float) and not np.isfinite(value):
        return str(value)
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    return str(value)


def canonical_json(value: Any) -> str:
    return json.dumps(_to_builtin(value), sort_keys=True, indent=2)


def config_hash(subcommand: str, config: Dict[str, Any], params: Dict[str, Any], seed: int) -> str:
    """SHA-256 of the canonical resolved run description."""
    payload = {"subcommand": subcommand, "config": config, "params": params, "seed": seed}
    return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()


def package_versions(lab_version: str) -> PackageVersions:
    def version(name: str) -> str:
        try:
            return metadata.version(name)
        except metadata.PackageNotFoundError:
            return "unknown"

    return PackageVersions(
        python=platform.python_version(),
        lab=lab_version,
        numpy=version("numpy"),
        scipy=version("scipy"),
        pandas=version("pandas"),
        networkx=version("networkx"),
        pydantic=version("pydantic"),
    )


class ResultWriter:
    """
    Collect the outputs of one run and write them atomically.

    Nothing touches the output root until `commit`: files are written to a
    hidden staging directory that is renamed into place, so a failed run
    leaves no partial directory.
    """

    def __init__(self, output_root: Union[str, Path], subcommand: str, config: Dict[str, Any],
                 params: Dict[str, Any], seed: int):
        """
        Initialize writer.

        Args:
            output_root: Parent of all run directories
            subcommand: Experiment name
            config: Resolved walk model (WalkConfig.to_dict())
            params: Resolved experiment parameters
            seed: Experiment seed
        """
        self.output_root = Path(output_root)
        self.subcommand = subcommand
        self.config = config
        self.params = _to_builtin(params)
        self.seed = seed
        self.hash = config_hash(subcommand, config, self.params, seed)
        self.tables: Dict[str, pd.DataFrame] = {}
        self.documents: Dict[str, Any] = {}
        self.summary_lines: List[str] = []
        self.metadata: Dict[str, Any] = {}

    @property
    def run_name(self) -> str:
        return f"{self.subcommand}-{self.hash[:12]}-seed{self.seed}"

    @property
    def run_dir(self) -> Path:
        return self.output_root / self.run_name

    def add_table(self, name: str, table: pd.DataFrame) -> None:
        self.tables[f"{name}.csv"] = table

    def add_json(self, name: str, document: JSONable) -> None:
        self.documents[f"{name}.json"] = document

    def add_summary(self, line: str) -> None:
        self.summary_lines.append(line)

    def render_summary(self) -> str:
        lines = [f"# {self.subcommand} run `{self.run_name}`\n"]
        lines.append(f"- **Model:** {self.config.get('name', 'custom')} (d={self.config.get('dim')}, "
                     f"{len(self.config.get('generators', []))} generators)\n")
        lines.append(f"- **Seed:** {self.seed}\n")
        lines.append(f"- **Config hash:** `{self.hash}`\n")
        if self.params:
            lines.append("\n## Parameters\n")
            for key in sorted(self.params):
                lines.append(f"- {key}: {self.params[key]}\n")
        if self.summary_lines:
            lines.append("\n## Results\n")
            for line in self.summary_lines:
                lines.append(f"- {line}\n")
        if self.tables or self.documents:
            lines.append("\n## Files\n")
            for name in sorted(list(self.tables) + list(self.documents)):
                lines.append(f"- `{name}`\n")
        return "".join(lines)

    def commit(self, lab_version: str, wall_time_seconds: float) -> Path:
        """
        Write every collected output plus manifest.json and summary.md.

        Returns:
            The run directory
        """
        final = self.run_dir
        staging = self.output_root / f".{self.run_name}.partial"
        self.output_root.mkdir(parents=True, exist_ok=True)
        if staging.exists():
            shutil.rmtree(staging)
        staging.mkdir()
        try:
            for name, table in self.tables.items():
                table.to_csv(staging / name, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
            for name, document in self.documents.items():
                (staging / name).write_text(canonical_json(document) + "\n", encoding="utf-8")
            (staging / "summary.md").write_text(self.render_summary(), encoding="utf-8")
            manifest = RunManifest(
                subcommand=self.subcommand,
                config_hash=self.hash,
                config=self.config,
                params=self.params,
                seed=self.seed,
                versions=package_versions(lab_version),
                wall_time_seconds=wall_time_seconds,
                timestamp=datetime.now(timezone.utc).isoformat(),
                outputs=sorted(list(self.tables) + list(self.documents)),
                metadata=_to_builtin(self.metadata),
            )
            (staging / "manifest.json").write_text(canonical_json(manifest) + "\n", encoding="utf-8")
            if final.exists():
                shutil.rmtree(final)
            staging.rename(final)
        except OSError as e:
            logger.error(f"Writing run directory {final} failed: {e}")
            shutil.rmtree(staging, ignore_errors=True)
            raise
        logger.info(f"Results written to {final}")
        return final


def read_manifest(run_dir: Union[str, Path]) -> Optional[RunManifest]:
    path = Path(run_dir) / "manifest.json"
    if not path.exists():
        return None
    return RunManifest.model_validate_json(path.read_text(encoding="utf-8"))
