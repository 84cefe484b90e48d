"""Report files and the run manifest they point back to."""

from __future__ import annotations

import csv
import hashlib
import json
import time
from collections import Counter
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .markov import digest_file

MANIFEST_NAME = "manifest.json"


def tool_version() -> str:
    from importlib.metadata import PackageNotFoundError, version

    try:
        return version("genai-traffic")
    except PackageNotFoundError:
        return "0+unknown"


@dataclass
class RunManifest:
    command: str
    config: dict
    seeds: list[int] = field(default_factory=list)
    inputs: dict[str, str] = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)
    counters: Counter = field(default_factory=Counter)
    warnings: list[str] = field(default_factory=list)
    outputs: list[str] = field(default_factory=list)
    version: str = field(default_factory=tool_version)

    def add_input(self, path) -> str:
        digest = digest_file(path)
        self.inputs[str(path)] = digest
        return digest

    @property
    def run_id(self) -> str:
        """Digest of everything that determines the outputs (not timings)."""
        key = json.dumps({"command": self.command, "version": self.version, "config": self.config,
                          "seeds": self.seeds, "inputs": sorted(self.inputs.values())},
                         sort_keys=True, default=str)
        return hashlib.sha256(key.encode()).hexdigest()[:16]

    @contextmanager
    def stage(self, name: str):
        t = time.perf_counter()
        try:
            yield
        finally:
            self.timings[name] = self.timings.get(name, 0.0) + round(time.perf_counter() - t, 6)

    def warn(self, message: str) -> None:
        self.warnings.append(message)

    def to_dict(self) -> dict:
        return {
            "tool": "genai-traffic", "version": self.version, "run_id": self.run_id,
            "command": self.command, "config": self.config, "seeds": self.seeds,
            "inputs": self.inputs, "timings_s": self.timings,
            "counters": dict(sorted(self.counters.items())), "warnings": self.warnings,
            "outputs": sorted(self.outputs),
        }


class ReportWriter:
    """Writes reports into one directory; each carries the manifest's run id."""

    def __init__(self, out_dir, manifest: RunManifest):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.manifest = manifest

    def _register(self, name: str) -> Path:
        self.manifest.outputs.append(name)
        path = self.out_dir / name
        path.parent.mkdir(parents=True, exist_ok=True)
        return path

    def csv(self, name: str, rows: Iterable[dict], columns: Sequence[str]) -> Path:
        """Comma-separated rows after a ``#`` line naming the manifest."""
        path = self._register(name)
        with open(path, "w", newline="") as fh:
            fh.write(f"# manifest={MANIFEST_NAME} run_id={self.manifest.run_id}\n")
            w = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\n")
            w.writeheader()
            for row in rows:
                w.writerow(row)
        return path

    def json(self, name: str, doc) -> Path:
        path = self._register(name)
        body = {"manifest": MANIFEST_NAME, "run_id": self.manifest.run_id, "data": doc}
        path.write_text(json.dumps(body, indent=1, sort_keys=True, default=str) + "\n")
        return path

    def text(self, name: str, text: str) -> Path:
        path = self._register(name)
        path.write_text(f"# manifest={MANIFEST_NAME} run_id={self.manifest.run_id}\n{text.rstrip()}\n")
        return path

    def finish(self) -> Path:
        path = self.out_dir / MANIFEST_NAME
        path.write_text(json.dumps(self.manifest.to_dict(), indent=1, default=str) + "\n")
        return path


def read_csv(path) -> list[dict]:
    """Rows of a report CSV written by :class:`ReportWriter`."""
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def read_json(path, run_id: Optional[str] = None):
    doc = json.loads(Path(path).read_text())
    if run_id is not None and doc.get("run_id") != run_id:
        raise ValueError(f"{path} belongs to run {doc.get('run_id')}, not {run_id}")
    return doc["data"]
