"""Run manifests: reproducibility receipts for scenario outputs.

A manifest is a plain-text file with ``#`` header comments (config hash,
seed, artifact version) followed by one ``path sha256 bytes`` line per
output, sorted by path.  Re-running a scenario with the same config and
seed must reproduce the manifest byte for byte; the determinism acceptance
check diffs exactly this file.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass


@dataclass(frozen=True)
class ManifestEntry:
    path: str  # relative to the output directory, '/' separators
    sha256: str
    n_bytes: int


@dataclass
class RunManifest:
    config_sha256: str
    seed: int
    version: str
    entries: list

    def text(self) -> str:
        lines = [
            "# rfsense run manifest",
            "# config_sha256 %s" % self.config_sha256,
            "# seed %d" % self.seed,
            "# version %s" % self.version,
        ]
        for e in sorted(self.entries, key=lambda e: e.path):
            lines.append("%s %s %d" % (e.path, e.sha256, e.n_bytes))
        return "\n".join(lines) + "\n"


def hash_file(path) -> tuple[str, int]:
    h = hashlib.sha256()
    n = 0
    with open(path, "rb") as fh:
        while True:
            block = fh.read(1 << 20)
            if not block:
                break
            h.update(block)
            n += len(block)
    return h.hexdigest(), n


def build_manifest(out_dir, rel_paths, config_sha256: str, seed: int, version: str) -> RunManifest:
    entries = []
    for rel in rel_paths:
        digest, n = hash_file(os.path.join(out_dir, rel))
        entries.append(ManifestEntry(path=rel.replace(os.sep, "/"), sha256=digest, n_bytes=n))
    return RunManifest(
        config_sha256=config_sha256, seed=seed, version=version, entries=entries
    )


def write_manifest(manifest: RunManifest, path) -> None:
    with open(path, "w") as fh:
        fh.write(manifest.text())


def read_manifest(path) -> RunManifest:
    config_sha256 = ""
    seed = 0
    version = ""
    entries = []
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if len(parts) == 2 and parts[0] == "config_sha256":
                    config_sha256 = parts[1]
                elif len(parts) == 2 and parts[0] == "seed":
                    seed = int(parts[1])
                elif len(parts) == 2 and parts[0] == "version":
                    version = parts[1]
                continue
            rel, digest, n = line.split()
            entries.append(ManifestEntry(path=rel, sha256=digest, n_bytes=int(n)))
    return RunManifest(config_sha256=config_sha256, seed=seed, version=version, entries=entries)
