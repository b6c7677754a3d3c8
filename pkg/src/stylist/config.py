"""Runtime configuration: YAML file, environment overrides, validation.

Precedence is defaults < config file < environment. Environment variables
use the STYLIST_ prefix; nested fields join section and field with a
double underscore, e.g. STYLIST_BACKEND__BASE_URL sets backend.base_url.
Validation errors name the offending field.
"""

from __future__ import annotations

import types
import typing
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

import yaml

from .chat import (
    ChatBackend,
    HttpChatBackend,
    RandomChoiceBackend,
    ScriptedChatBackend,
    SimilarityOracleBackend,
)
from .embedding import EmbeddingProvider, HashEmbedder, HttpEmbedder

ENV_PREFIX = "STYLIST_"

BACKEND_KINDS = ("scripted", "oracle", "random", "http")
EMBEDDER_KINDS = ("hash", "http")
CATALOG_MODES = ("joint", "disjoint")

_TRUE_WORDS = frozenset({"1", "true", "yes", "on"})
_FALSE_WORDS = frozenset({"0", "false", "no", "off"})


class ConfigError(ValueError):
    """Configuration failure; the message names the field."""


@dataclass(frozen=True)
class BackendConfig:
    kind: str = "random"
    base_url: str | None = None
    model: str = "default"
    api_key: str | None = None
    timeout: float = 60.0
    max_retries: int = 2
    seed: int = 0
    replies: tuple[str, ...] = ()


@dataclass(frozen=True)
class EmbedderConfig:
    kind: str = "hash"
    dims: int = 64
    seed: int = 0
    base_url: str | None = None
    model: str = "embed"
    api_key: str | None = None


@dataclass(frozen=True)
class RetrievalConfig:
    k_per_path: int = 10
    k_final: int = 10
    llm_questions: bool = False
    n_questions: int = 3


@dataclass(frozen=True)
class ServiceConfig:
    page_size: int = 50
    max_k: int = 50
    concurrency: int = 4
    request_timeout: float = 30.0
    fallback: bool = True


@dataclass(frozen=True)
class AppConfig:
    catalog_root: str | None = None
    index_path: str | None = None
    catalog_mode: str = "joint"
    backend: BackendConfig = field(default_factory=BackendConfig)
    embedder: EmbedderConfig = field(default_factory=EmbedderConfig)
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    service: ServiceConfig = field(default_factory=ServiceConfig)


_SECTIONS = {
    "backend": BackendConfig,
    "embedder": EmbedderConfig,
    "retrieval": RetrievalConfig,
    "service": ServiceConfig,
}


def _strip_optional(hint: Any) -> Any:
    if typing.get_origin(hint) in (typing.Union, types.UnionType):
        args = [a for a in typing.get_args(hint) if a is not type(None)]
        if len(args) == 1:
            return args[0]
    return hint


def _coerce(value: Any, hint: Any, path: str) -> Any:
    if value is None:
        return None
    hint = _strip_optional(hint)
    origin = typing.get_origin(hint)
    if origin is tuple:
        if isinstance(value, str):
            parts = [p.strip() for p in value.split(",")]
            return tuple(p for p in parts if p)
        if isinstance(value, (list, tuple)):
            return tuple(str(v) for v in value)
        raise ConfigError(f"{path}: expected a list, got {value!r}")
    if hint is bool:
        if isinstance(value, bool):
            return value
        if isinstance(value, str):
            word = value.strip().lower()
            if word in _TRUE_WORDS:
                return True
            if word in _FALSE_WORDS:
                return False
        raise ConfigError(f"{path}: expected a boolean, got {value!r}")
    if hint is int:
        if isinstance(value, bool):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        if isinstance(value, int):
            return value
        if isinstance(value, str):
            try:
                return int(value.strip())
            except ValueError:
                pass
        raise ConfigError(f"{path}: expected an integer, got {value!r}")
    if hint is float:
        if isinstance(value, bool):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        if isinstance(value, (int, float)):
            return float(value)
        if isinstance(value, str):
            try:
                return float(value.strip())
            except ValueError:
                pass
        raise ConfigError(f"{path}: expected a number, got {value!r}")
    if hint is str:
        if isinstance(value, str):
            return value
        if isinstance(value, (int, float)):
            return str(value)
        raise ConfigError(f"{path}: expected a string, got {value!r}")
    raise ConfigError(f"{path}: unsupported value {value!r}")


def _build_section(cls, data: Mapping[str, Any], prefix: str):
    hints = typing.get_type_hints(cls)
    known = {f.name for f in fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"unknown config field {prefix}{key}")
        kwargs[key] = _coerce(value, hints[key], f"{prefix}{key}")
    return cls(**kwargs)


def _read_file(path: Path) -> dict:
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a mapping")
    return raw


def _apply_env(data: dict, env: Mapping[str, str]) -> None:
    for key in sorted(env):
        if not key.startswith(ENV_PREFIX):
            continue
        rest = key[len(ENV_PREFIX) :].lower()
        value = env[key]
        if "__" in rest:
            section, _, name = rest.partition("__")
            if section not in _SECTIONS:
                raise ConfigError(f"unknown config field {section} (from {key})")
            bucket = data.setdefault(section, {})
            if not isinstance(bucket, dict):
                raise ConfigError(f"{section}: expected a mapping")
            bucket[name] = value
        else:
            data[rest] = value


def validate_config(config: AppConfig) -> AppConfig:
    """Check cross-field constraints; returns the config for chaining."""
    b = config.backend
    if b.kind not in BACKEND_KINDS:
        raise ConfigError(
            f"backend.kind: expected one of {', '.join(BACKEND_KINDS)}, got {b.kind!r}"
        )
    if b.kind == "http" and not (b.base_url or "").strip():
        raise ConfigError("backend.base_url: required when backend.kind is 'http'")
    if b.timeout <= 0:
        raise ConfigError(f"backend.timeout: must be positive, got {b.timeout}")
    if b.max_retries < 0:
        raise ConfigError(f"backend.max_retries: must be >= 0, got {b.max_retries}")

    e = config.embedder
    if e.kind not in EMBEDDER_KINDS:
        raise ConfigError(
            f"embedder.kind: expected one of {', '.join(EMBEDDER_KINDS)}, got {e.kind!r}"
        )
    if e.kind == "http" and not (e.base_url or "").strip():
        raise ConfigError("embedder.base_url: required when embedder.kind is 'http'")
    if e.dims < 1:
        raise ConfigError(f"embedder.dims: must be >= 1, got {e.dims}")

    r = config.retrieval
    if r.k_per_path < 1:
        raise ConfigError(f"retrieval.k_per_path: must be >= 1, got {r.k_per_path}")
    if r.k_final < 1:
        raise ConfigError(f"retrieval.k_final: must be >= 1, got {r.k_final}")
    if r.n_questions < 1:
        raise ConfigError(f"retrieval.n_questions: must be >= 1, got {r.n_questions}")

    s = config.service
    if s.page_size < 1:
        raise ConfigError(f"service.page_size: must be >= 1, got {s.page_size}")
    if s.max_k < 1:
        raise ConfigError(f"service.max_k: must be >= 1, got {s.max_k}")
    if s.concurrency < 1:
        raise ConfigError(f"service.concurrency: must be >= 1, got {s.concurrency}")
    if s.request_timeout <= 0:
        raise ConfigError(
            f"service.request_timeout: must be positive, got {s.request_timeout}"
        )

    if config.catalog_mode not in CATALOG_MODES:
        raise ConfigError(
            f"catalog_mode: expected one of {', '.join(CATALOG_MODES)}, "
            f"got {config.catalog_mode!r}"
        )
    return config


def load_config(
    path: str | Path | None = None, env: Mapping[str, str] | None = None
) -> AppConfig:
    """Merge defaults, an optional YAML file, and STYLIST_* variables."""
    if env is None:
        import os

        env = os.environ
    data = _read_file(Path(path)) if path is not None else {}
    _apply_env(data, env)

    top_hints = typing.get_type_hints(AppConfig)
    kwargs: dict[str, Any] = {}
    for key, value in data.items():
        if key in _SECTIONS:
            if not isinstance(value, dict):
                raise ConfigError(f"{key}: expected a mapping, got {value!r}")
            kwargs[key] = _build_section(_SECTIONS[key], value, f"{key}.")
        elif key in ("catalog_root", "index_path", "catalog_mode"):
            kwargs[key] = _coerce(value, top_hints[key], key)
        else:
            raise ConfigError(f"unknown config field {key}")
    return validate_config(AppConfig(**kwargs))


def build_embedder(config: EmbedderConfig) -> EmbeddingProvider:
    if config.kind == "hash":
        return HashEmbedder(dims=config.dims, seed=config.seed)
    return HttpEmbedder(
        base_url=config.base_url or "",
        model=config.model,
        dims=config.dims,
        api_key=config.api_key,
    )


def build_backend(
    config: BackendConfig, provider: EmbeddingProvider | None = None
) -> ChatBackend:
    """Instantiate the configured chat backend.

    The oracle kind needs the embedding provider the index was built with;
    passing none is a configuration error.
    """
    if config.kind == "scripted":
        return ScriptedChatBackend(list(config.replies))
    if config.kind == "random":
        return RandomChoiceBackend(seed=config.seed)
    if config.kind == "oracle":
        if provider is None:
            raise ConfigError(
                "backend.kind: 'oracle' needs an embedding provider to score with"
            )
        return SimilarityOracleBackend(provider)
    if config.kind == "http":
        return HttpChatBackend(
            base_url=config.base_url or "",
            model=config.model,
            api_key=config.api_key,
            timeout=config.timeout,
            max_retries=config.max_retries,
        )
    raise ConfigError(f"backend.kind: unknown kind {config.kind!r}")
