"""Line-delimited JSON I/O and run manifests.

Every artifact-writing command drops a sibling manifest recording the config
hash, input file hashes and package version; no wall-clock timestamps, so
identical inputs yield byte-identical artifacts and manifests.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any, Iterable, Iterator

from . import __version__


def read_jsonl(path: str | Path) -> Iterator[dict]:
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            yield json.loads(line)


def write_jsonl(path: str | Path, records: Iterable[dict]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")
    return path


def write_json(path: str | Path, payload: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps(payload, ensure_ascii=False, indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    return path


def file_sha256(path: str | Path) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def config_hash(payload: Any) -> str:
    canonical = json.dumps(payload, sort_keys=True, ensure_ascii=False, default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def write_manifest(
    artifact: str | Path,
    command: str,
    inputs: Iterable[str | Path] = (),
    config: Any = None,
    seed: int = 0,
) -> Path:
    artifact = Path(artifact)
    manifest = {
        "command": command,
        "artifact": artifact.name,
        "version": __version__,
        "seed": seed,
        "config_hash": config_hash(config or {}),
        "input_hashes": {
            Path(p).name: file_sha256(p) for p in sorted(map(str, inputs))
        },
    }
    target = artifact.with_name(artifact.name + ".manifest.json")
    return write_json(target, manifest)
