"""
JSONL streaming, atomic output writes and run manifests.
"""

import csv
import hashlib
import json
import os
import tempfile
import time
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Mapping, Optional, Union

from pydantic import BaseModel, Field

from . import __version__
from .errors import CoAError


def iter_jsonl(path: Path) -> Iterator[Dict[str, Any]]:
    """Yield JSON objects from a JSONL file (streaming). Blank lines are skipped."""
    with Path(path).open("r", encoding="utf-8") as handle:
        for line_num, line in enumerate(handle, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CoAError(f"Malformed JSON at {path}:{line_num}", path=str(path), line=line_num) from exc
            if not isinstance(obj, dict):
                raise CoAError(f"Expected object at {path}:{line_num}, got {type(obj).__name__}", path=str(path), line=line_num)
            yield obj


def dumps_line(row: Mapping[str, Any]) -> str:
    return json.dumps(dict(row), ensure_ascii=False, sort_keys=True) + "\n"


@contextmanager
def atomic_open(path: Path, mode: str = "w"):
    """Write to a temporary sibling file, then move it over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    binary = "b" in mode
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, mode, **({} if binary else {"encoding": "utf-8", "newline": "\n"})) as handle:
            yield handle
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def write_jsonl(path: Path, rows: Iterable[Mapping[str, Any]]) -> int:
    count = 0
    with atomic_open(path) as handle:
        for row in rows:
            handle.write(dumps_line(row))
            count += 1
    return count


def write_json(path: Path, payload: Any) -> None:
    with atomic_open(path) as handle:
        handle.write(json.dumps(payload, ensure_ascii=False, sort_keys=True, indent=2))
        handle.write("\n")


def write_csv(path: Path, rows: Iterable[Mapping[str, Any]], columns: List[str]) -> None:
    """CSV with a header row; ``None`` becomes an empty cell."""
    with atomic_open(path) as handle:
        writer = csv.DictWriter(handle, fieldnames=list(columns), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: "" if row.get(k) is None else row.get(k) for k in columns})


def file_digest(path: Path) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as handle:
        for block in iter(lambda: handle.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


class Manifest(BaseModel):
    """Provenance written next to every output artifact."""

    tool_version: str = __version__
    command: str
    config: Dict[str, Any]
    config_hash: str
    inputs: Dict[str, str] = Field(default_factory=dict)
    outputs: List[str] = Field(default_factory=list)
    elapsed_seconds: float = 0.0


class ManifestRecorder:
    """Collects input digests and timing for one command run."""

    def __init__(self, command: str, config: Dict[str, Any], config_hash: str):
        self.command = command
        self.config = config
        self.config_hash = config_hash
        self.inputs: Dict[str, str] = {}
        self.outputs: List[str] = []
        self._started = time.perf_counter()

    def add_input(self, path: Optional[Union[str, Path]]) -> None:
        if path is not None and Path(path).is_file():
            self.inputs[str(path)] = file_digest(Path(path))

    def add_output(self, path: Union[str, Path]) -> None:
        self.outputs.append(str(path))

    def write(self, primary_output: Path) -> Path:
        manifest = Manifest(
            command=self.command,
            config=self.config,
            config_hash=self.config_hash,
            inputs=dict(sorted(self.inputs.items())),
            outputs=self.outputs,
            elapsed_seconds=round(time.perf_counter() - self._started, 6),
        )
        target = manifest_path(primary_output)
        write_json(target, manifest.model_dump(mode="json"))
        return target


def manifest_path(output: Path) -> Path:
    output = Path(output)
    if output.is_dir():
        return output / "manifest.json"
    return output.with_name(output.name + ".manifest.json")
