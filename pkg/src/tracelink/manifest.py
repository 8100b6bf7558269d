"""Run manifests: one JSON record per CLI invocation.

A manifest snapshots the command, its effective configuration, content
digests of every input file, and the paths of every output, so any run can
be replayed to byte-identical machine outputs (given fixed seeds and no
network). Timestamps live only here, never in the machine outputs.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

TOOL_VERSION = "0.1.0"


def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: list[str]
    config: dict
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: list[str] = field(default_factory=list)
    started_at: str = ""
    finished_at: str = ""
    tool_version: str = TOOL_VERSION

    def start(self) -> "RunManifest":
        self.started_at = datetime.now(timezone.utc).isoformat()
        return self

    def add_input(self, path: str | Path) -> None:
        self.inputs[str(path)] = file_digest(path)

    def add_output(self, path: str | Path) -> None:
        self.outputs.append(str(path))

    def write(self, out_dir: str | Path) -> Path:
        self.finished_at = datetime.now(timezone.utc).isoformat()
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / "manifest.json"
        payload = {
            "command": self.command,
            "config": self.config,
            "inputs": self.inputs,
            "outputs": sorted(self.outputs),
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "tool_version": self.tool_version,
        }
        path.write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        return path
