"""
Run configuration, logging setup and config hashing.

Values resolve as command-line flags > ``key=value`` config file > defaults.
The config file uses dotenv syntax, so comments and quoting work as in ``.env``.
"""

import hashlib
import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Literal, Mapping, Optional

from dotenv import dotenv_values, load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator
from rich.console import Console
from rich.logging import RichHandler

from .errors import ConfigError
from .trace_dsl import Domain
from .workers import default_workers

LOG_ENV = "COA_LOG"
DEFAULT_LOG_LEVEL = "WARNING"

# not part of the reproducibility hash
_UNHASHED = {"log_level", "workers", "json_errors"}


class RunConfig(BaseModel):
    """Every knob a subcommand reads. Paths are validated by the command that uses them."""

    model_config = ConfigDict(extra="forbid", validate_assignment=True)

    domain: Domain = Domain.MATH

    corpus: Optional[Path] = None
    index: Optional[Path] = None
    traces: Optional[Path] = None
    gold: Optional[Path] = None
    candidates: Optional[Path] = None
    predictions: Optional[Path] = None
    workload: Optional[Path] = None
    answers: Optional[Path] = None
    output: Optional[Path] = None

    # retrieval tools
    k1: float = Field(1.2, gt=0)
    b: float = Field(0.75, ge=0, le=1)
    title_weight: int = Field(2, ge=0)
    stem: bool = False
    chunk: bool = False
    index_format: Literal["binary", "json"] = "binary"
    top_k: int = Field(10, ge=1)
    rerank_reference: Literal["query", "question"] = "query"
    ner: Literal["gazetteer", "spacy"] = "gazetteer"
    spacy_model: str = "en_core_web_sm"
    match_any_topk: bool = False

    # pipeline
    mode: Literal["decoupled", "interleaved", "both"] = "both"
    queue: int = Field(8, ge=1)
    sim_decode_tps: float = Field(20.0, gt=0)
    sim_tool_ms: float = Field(500.0, ge=0)
    clock: Literal["virtual", "real"] = "virtual"
    generator: Literal["replay", "llm"] = "replay"
    model: Optional[str] = None

    # evaluation
    answer_style: Literal["answer_is", "fireact_finish"] = "answer_is"
    min_cell: int = Field(15, ge=0)

    seed: int = 0
    workers: int = Field(default_factory=default_workers, ge=1)
    log_level: Optional[str] = None
    json_errors: bool = False

    @field_validator("log_level")
    @classmethod
    def _known_level(cls, value: Optional[str]) -> Optional[str]:
        if value is not None and value.upper() not in logging.getLevelNamesMapping():
            raise ValueError(f"unknown log level {value!r}")
        return value.upper() if value else value

    def hashed_fields(self) -> Dict[str, Any]:
        return self.model_dump(mode="json", exclude=_UNHASHED)

    @property
    def config_hash(self) -> str:
        return config_hash(self)


def config_hash(config: RunConfig) -> str:
    """SHA-256 of the canonical JSON of the resolved config."""
    canonical = json.dumps(config.hashed_fields(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _normalize_key(key: str) -> str:
    return key.strip().lower().replace("-", "_")


def read_config_file(path: Path) -> Dict[str, Optional[str]]:
    """Flat ``key=value`` pairs from a config file.

    Raises:
        ConfigError: the file is missing or names an unknown key.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"Config file not found: {path}", path=str(path))
    values = {_normalize_key(k): v for k, v in dotenv_values(path).items()}
    unknown = sorted(set(values) - set(RunConfig.model_fields))
    if unknown:
        raise ConfigError(f"Unknown config keys in {path}: {', '.join(unknown)}", path=str(path), keys=unknown)
    return values


def load_config(path: Optional[Path] = None, overrides: Optional[Mapping[str, Any]] = None) -> RunConfig:
    """Resolve a ``RunConfig``. ``None`` overrides mean "flag not given".

    Raises:
        ConfigError
    """
    merged: Dict[str, Any] = {}
    if path is not None:
        merged.update({k: v for k, v in read_config_file(path).items() if v not in (None, "")})
    for key, value in (overrides or {}).items():
        if value is not None:
            merged[_normalize_key(key)] = value
    try:
        return RunConfig.model_validate(merged)
    except ValidationError as exc:
        problems = "; ".join(f"{'.'.join(map(str, e['loc']))}: {e['msg']}" for e in exc.errors())
        raise ConfigError(f"Invalid configuration: {problems}") from None


def configure_logging(level: Optional[str] = None) -> str:
    """Install a rich stderr handler on the package logger.

    Level: ``level`` argument, else ``COA_LOG`` (``.env`` is loaded), else WARNING.
    """
    load_dotenv()
    resolved = (level or os.getenv(LOG_ENV) or DEFAULT_LOG_LEVEL).upper()
    package_logger = logging.getLogger(__name__.rsplit(".", 1)[0])
    for handler in list(package_logger.handlers):
        package_logger.removeHandler(handler)
    handler = RichHandler(console=Console(stderr=True), show_path=False, rich_tracebacks=False)
    handler.setFormatter(logging.Formatter("%(message)s"))
    package_logger.addHandler(handler)
    package_logger.setLevel(resolved if resolved in logging.getLevelNamesMapping() else DEFAULT_LOG_LEVEL)
    package_logger.propagate = False
    return resolved
