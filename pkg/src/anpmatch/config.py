"""Pipeline configuration: an INI file with one ``[anpmatch]`` section whose
keys are the :class:`PipelineConfig` field names. Command-line values win.

List values are comma separated; input paths are resolved against the
config file's directory.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import ConfigError

SECTION = "anpmatch"

INPUT_PATHS = ("lexicon", "annotations", "dictionary", "embeddings", "image_tags", "face_detections")

CHOICES = {
    "embeddings_format": ("auto", "text", "binary"),
    "embedding_tokenization": ("words", "words_plus_anp"),
    "compose_mode": ("sum", "learned_with_fallback"),
    "polarity_source": ("crowdsourced", "automatic"),
    "scheme": ("one_stage", "two_stage_noun", "two_stage_adj"),
    "relatedness_assignment": ("both", "any"),
    "connectivity_mode": ("pairs", "concepts"),
    "face_size_mode": ("linear", "area"),
    "faces_mode": ("all_images", "face_images"),
}


@dataclass
class PipelineConfig:
    lexicon: list = field(default_factory=list)
    annotations: Optional[str] = None
    dictionary: Optional[str] = None
    embeddings: Optional[str] = None
    image_tags: Optional[str] = None
    face_detections: Optional[str] = None
    output: str = "out"

    pivot_language: str = "en"
    embeddings_format: str = "auto"
    embedding_window: int = 5
    embedding_tokenization: str = "words"
    compose_mode: str = "sum"
    polarity_source: str = "crowdsourced"

    scheme: str = "one_stage"
    k: int = 10
    groups: int = 0  # two-stage word groups; 0 = max(1, k // 10)
    seed: int = 0
    threads: int = 1

    thresholds: list = field(default_factory=lambda: [0.0, 0.1, 0.2, 0.3])
    sample_cap: int = 1000  # images per concept; 0 = no cap
    relatedness_assignment: str = "both"
    sem_pairs_denominator: bool = False
    connectivity_mode: str = "pairs"

    portrait_threshold: float = 0.6
    min_per_language: int = 20
    portrait_k: int = 0  # 0 = same as k
    language_k_min: int = 2
    language_k_max: int = 6
    face_size_mode: str = "linear"
    faces_mode: str = "all_images"

    strict: bool = False

    def validate(self, check_paths: bool = True) -> "PipelineConfig":
        for name, allowed in CHOICES.items():
            if getattr(self, name) not in allowed:
                raise ConfigError("BAD_VALUE", f"{name}={getattr(self, name)!r}; expected one of {allowed}")
        for name in ("k", "embedding_window", "threads", "language_k_min", "language_k_max"):
            if getattr(self, name) < 1:
                raise ConfigError("BAD_VALUE", f"{name} must be >= 1")
        for name in ("groups", "portrait_k", "min_per_language", "sample_cap"):
            if getattr(self, name) < 0:
                raise ConfigError("BAD_VALUE", f"{name} must be >= 0")
        if any(t < 0 for t in self.thresholds):
            raise ConfigError("BAD_VALUE", "thresholds must be >= 0")
        if not 0 <= self.portrait_threshold <= 1:
            raise ConfigError("BAD_VALUE", "portrait_threshold must be in [0, 1]")
        if check_paths:
            for name in INPUT_PATHS:
                for p in self.paths(name):
                    if not Path(p).is_file():
                        raise ConfigError("MISSING_PATH", f"{name}: {p} does not exist")
        return self

    def paths(self, name) -> list:
        value = getattr(self, name)
        if not value:
            return []
        return list(value) if isinstance(value, list) else [value]

    def canonical(self) -> dict:
        """Config values with input paths replaced by content digests and the
        output directory dropped, so equal runs hash equally on any machine."""
        out = {}
        for f in dataclasses.fields(self):
            if f.name in ("output", "threads"):
                continue
            value = getattr(self, f.name)
            if f.name in INPUT_PATHS:
                value = [_file_digest(p) for p in self.paths(f.name)]
            out[f.name] = value
        return out

    def hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _file_digest(path) -> str:
    try:
        return hashlib.sha256(Path(path).read_bytes()).hexdigest()
    except OSError:
        return "missing"


def _coerce(name, raw, base: Optional[Path]):
    f = {f.name: f for f in dataclasses.fields(PipelineConfig)}.get(name)
    if f is None:
        raise ConfigError("UNKNOWN_KEY", f"unknown configuration key {name!r}")
    default = f.default_factory() if f.default_factory is not dataclasses.MISSING else f.default
    if isinstance(raw, str):
        raw = raw.strip()
    try:
        if name in INPUT_PATHS:
            items = [s.strip() for s in raw.split(",")] if isinstance(raw, str) else list(raw)
            items = [str(base / s) if base is not None and not Path(s).is_absolute() else s
                     for s in items if s]
            if name == "lexicon":
                return items
            return items[0] if items else None
        if name == "thresholds":
            items = raw.split(",") if isinstance(raw, str) else raw
            return [float(x) for x in items]
        if isinstance(default, bool):
            if isinstance(raw, bool):
                return raw
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw
    except (ValueError, TypeError) as exc:
        raise ConfigError("BAD_VALUE", f"{name}: {exc}") from exc


def load_config(path: Optional[str] = None, overrides: Optional[dict] = None,
                check_paths: bool = True) -> PipelineConfig:
    values = {}
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        try:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError("BAD_CONFIG", f"cannot read {path}: {exc}") from exc
        if not parser.has_section(SECTION):
            raise ConfigError("BAD_CONFIG", f"{path}: missing [{SECTION}] section")
        base = Path(path).resolve().parent
        for key, raw in parser.items(SECTION):
            values[key] = _coerce(key, raw, base)
    for key, raw in (overrides or {}).items():
        if raw is not None:
            values[key] = _coerce(key, raw, None)
    return PipelineConfig(**values).validate(check_paths)
