"""Run Manifest

Record of one pricing run: what was run, how long each stage took, which
files were written and the headline numbers.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional


ARTIFACT_VERSION = "1.0.0"


@dataclass
class RunManifest:
    """Manifest written next to the outputs as manifest.json"""
    config_hash: str                     # sha256 of the canonical scenario JSON
    seed: int
    n_paths: int
    artifact_version: str = ARTIFACT_VERSION
    stage_seconds: Dict[str, float] = field(default_factory=dict)
    files: List[str] = field(default_factory=list)
    headline: Dict[str, Optional[float]] = field(default_factory=dict)
    warnings: List[str] = field(default_factory=list)
    output_dir: Optional[str] = None

    def add_file(self, name: str):
        if name not in self.files:
            self.files.append(name)

    def to_dict(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "artifact_version": self.artifact_version,
            "seed": self.seed,
            "n_paths": self.n_paths,
            "stage_seconds": dict(self.stage_seconds),
            "files": list(self.files),
            "headline": dict(self.headline),
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RunManifest":
        return cls(
            config_hash=data["config_hash"],
            seed=data["seed"],
            n_paths=data["n_paths"],
            artifact_version=data.get("artifact_version", ARTIFACT_VERSION),
            stage_seconds=data.get("stage_seconds", {}),
            files=data.get("files", []),
            headline=data.get("headline", {}),
            warnings=data.get("warnings", []),
        )
