"""Run manifests: config echo, library versions, wall time and a content hash."""

from __future__ import annotations

import hashlib
import json
import platform
import sys
import time
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path

from .io import write_json

_PACKAGES = ("torusflow", "numpy", "scipy", "numba", "mpmath", "matplotlib")


def versions():
    out = {"python": sys.version.split()[0], "platform": platform.platform()}
    from .. import __version__

    out["torusflow"] = __version__
    for name in _PACKAGES[1:]:
        try:
            out[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            out[name] = "unknown"
    return out


@dataclass
class Manifest:
    """Echo of a run.

    ``digest`` covers the command, config, seed and versions only, so that
    artifacts from identical configs carry identical references; the wall
    time is recorded beside it.
    """

    command: str
    config: dict
    seed: int | None = None
    versions: dict = field(default_factory=versions)
    artifacts: list = field(default_factory=list)
    _start: float = field(default_factory=time.perf_counter, repr=False)
    wall_time: float | None = None

    @property
    def digest(self) -> str:
        blob = json.dumps({"command": self.command, "config": self.config, "seed": self.seed,
                           "versions": self.versions}, sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()

    @property
    def ref(self) -> str:
        return self.digest[:16]

    def add(self, path):
        self.artifacts.append(str(Path(path).name))

    def finish(self, outdir, status=0):
        self.wall_time = time.perf_counter() - self._start
        path = Path(outdir) / f"manifest_{self.command}.json"
        write_json(path, {"command": self.command, "config": self.config, "seed": self.seed,
                          "versions": self.versions, "artifacts": sorted(self.artifacts),
                          "wall_time_s": self.wall_time, "sha256": self.digest, "exit_status": status})
        return path
