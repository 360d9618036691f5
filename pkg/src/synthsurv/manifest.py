"""Run manifests: one JSON record per CLI invocation for reproducibility."""

from __future__ import annotations

import hashlib
import json
import time
from pathlib import Path


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


class RunManifest:
    """Written as 'incomplete' at start and finalized on success, so an
    interrupted run leaves a manifest that says so."""

    def __init__(self, out_dir: Path, command: str, config: dict, version: str,
                 inputs: list[str | Path] | None = None):
        self.path = Path(out_dir) / "manifest.json"
        self._t0 = time.monotonic()
        self.record = {
            "command": command,
            "version": version,
            "config": config,
            "inputs": {
                str(p): _sha256(Path(p)) for p in (inputs or []) if Path(p).is_file()
            },
            "status": "incomplete",
            "outputs": [],
            "wall_clock_seconds": None,
        }
        self._write()

    def _write(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text(json.dumps(self.record, indent=2, sort_keys=True) + "\n")

    def add_info(self, **fields):
        self.record.setdefault("info", {}).update(fields)

    def finish(self, outputs: list[str | Path], status: str = "complete"):
        self.record["status"] = status
        self.record["outputs"] = [str(p) for p in outputs]
        self.record["wall_clock_seconds"] = round(time.monotonic() - self._t0, 3)
        self._write()
