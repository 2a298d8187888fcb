"""Pipeline configuration, seed policies and layered config loading."""

from __future__ import annotations

import dataclasses
import hashlib
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional

from .inpainting import HARD, BlendMode, InpaintParams
from .prompting import DEFAULT_TEMPLATE, merged_emotion_nouns, validate_template
from .types import ContractError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

ENV_PREFIX = "ANONYPIPE_"


class ConfigError(ContractError):
    pass


@dataclass(frozen=True)
class SeedPolicy:
    """``fixed`` returns ``seed`` for every face; ``per_face_derived`` hashes the face identity."""

    kind: str = "per_face_derived"
    seed: Optional[int] = None

    def __post_init__(self):
        if self.kind == "fixed":
            if isinstance(self.seed, bool) or not isinstance(self.seed, int) or not 0 <= self.seed < 2**32:
                raise ContractError(f"fixed seed must be an unsigned 32-bit int, got {self.seed!r}")
        elif self.kind == "per_face_derived":
            if self.seed is not None:
                raise ContractError("per_face_derived takes no seed")
        else:
            raise ContractError(f"unknown seed policy {self.kind!r}")

    @classmethod
    def fixed(cls, seed: int) -> "SeedPolicy":
        return cls("fixed", seed)

    @classmethod
    def parse(cls, text) -> "SeedPolicy":
        if isinstance(text, SeedPolicy):
            return text
        if isinstance(text, int) and not isinstance(text, bool):
            return cls.fixed(text)
        text = str(text).strip()
        if text == "per_face_derived":
            return cls()
        kind, _, seed = text.partition(":")
        if kind == "fixed" and seed.isdigit():
            return cls.fixed(int(seed))
        raise ContractError(f"seed_policy must be 'per_face_derived' or 'fixed:<seed>', got {text!r}")

    def __str__(self):
        return self.kind if self.kind == "per_face_derived" else f"fixed:{self.seed}"


def derive_seed(policy: SeedPolicy, image_id: str, face_index: int) -> int:
    if policy.kind == "fixed":
        return policy.seed
    digest = hashlib.sha256(f"{image_id}\x00{face_index}".encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "big")


@dataclass(frozen=True)
class PipelineConfig:
    min_face_side: int = 100
    detection_confidence_threshold: float = 0.5
    mask_padding_ratio: float = 0.0
    extraction_margin_ratio: float = 0.0
    seed_policy: SeedPolicy = SeedPolicy()
    prompt_template: str = DEFAULT_TEMPLATE
    emotion_nouns: Mapping[str, str] = field(default_factory=merged_emotion_nouns)
    blend_mode: BlendMode = HARD
    inpaint_params: InpaintParams = InpaintParams()

    def __post_init__(self):
        if isinstance(self.min_face_side, bool) or not isinstance(self.min_face_side, int) or self.min_face_side < 1:
            raise ConfigError(f"min_face_side must be an int >= 1, got {self.min_face_side!r}")
        if not 0.0 <= self.detection_confidence_threshold <= 1.0:
            raise ConfigError(
                f"detection_confidence_threshold must lie in [0, 1], got {self.detection_confidence_threshold!r}"
            )
        if not self.mask_padding_ratio >= 0:
            raise ConfigError(f"mask_padding_ratio must be >= 0, got {self.mask_padding_ratio!r}")
        if not self.extraction_margin_ratio >= 0:
            raise ConfigError(f"extraction_margin_ratio must be >= 0, got {self.extraction_margin_ratio!r}")
        try:
            validate_template(self.prompt_template)
            object.__setattr__(self, "emotion_nouns", merged_emotion_nouns(self.emotion_nouns))
        except ContractError as exc:
            raise ConfigError(str(exc)) from None


BACKENDS = ("identity", "noise", "external")
DETECTORS = ("stub", "retinaface")
EXTRACTORS = ("stub", "deepface")


@dataclass(frozen=True)
class RunConfig:
    input: Optional[Path] = None
    output: Optional[Path] = None
    pipeline: PipelineConfig = PipelineConfig()
    inpaint_backend: str = "identity"
    detector: str = "stub"
    extractor: str = "stub"
    attributes_table: Optional[Path] = None
    external_endpoint: Optional[str] = None
    external_model: Optional[str] = None
    workers: int = 1
    emit_masks: bool = False

    def __post_init__(self):
        if self.inpaint_backend not in BACKENDS:
            raise ConfigError(f"inpaint_backend must be one of {BACKENDS}, got {self.inpaint_backend!r}")
        if self.detector not in DETECTORS:
            raise ConfigError(f"detector must be one of {DETECTORS}, got {self.detector!r}")
        if self.extractor not in EXTRACTORS:
            raise ConfigError(f"extractor must be one of {EXTRACTORS}, got {self.extractor!r}")
        if isinstance(self.workers, bool) or not isinstance(self.workers, int) or self.workers < 1:
            raise ConfigError(f"workers must be an int >= 1, got {self.workers!r}")
        if self.inpaint_backend == "external" and not self.external_endpoint:
            raise ConfigError("inpaint_backend 'external' needs external_endpoint")

    def check_paths(self) -> None:
        if self.input is None:
            raise ConfigError("input path is required")
        if self.output is None:
            raise ConfigError("output path is required")
        if not self.input.exists():
            raise ConfigError(f"input path does not exist: {self.input}")
        if self.output.exists() and not self.output.is_dir():
            raise ConfigError(f"output path is not a directory: {self.output}")
        if self.output.resolve() == (self.input if self.input.is_dir() else self.input.parent).resolve():
            raise ConfigError("output directory must differ from the input directory")


def _as_int(v):
    if isinstance(v, bool):
        raise ValueError("expected an integer")
    if isinstance(v, float):
        if not v.is_integer():
            raise ValueError("expected an integer")
        return int(v)
    return int(v)


def _as_bool(v):
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected a boolean")


def _as_path(v):
    return Path(v)


def _as_mapping(v):
    if not isinstance(v, Mapping):
        raise ValueError("expected a table")
    return dict(v)


# key -> (coercion, target) where target is "pipeline", "params" or "run".
KEYS: dict[str, tuple[Any, str]] = {
    "min_face_side": (_as_int, "pipeline"),
    "detection_confidence_threshold": (float, "pipeline"),
    "mask_padding_ratio": (float, "pipeline"),
    "extraction_margin_ratio": (float, "pipeline"),
    "seed_policy": (SeedPolicy.parse, "pipeline"),
    "prompt_template": (str, "pipeline"),
    "emotion_nouns": (_as_mapping, "pipeline"),
    "blend_mode": (BlendMode.parse, "pipeline"),
    "steps": (_as_int, "params"),
    "guidance_scale": (float, "params"),
    "extra": (_as_mapping, "params"),
    "input": (_as_path, "run"),
    "output": (_as_path, "run"),
    "inpaint_backend": (str, "run"),
    "detector": (str, "run"),
    "extractor": (str, "run"),
    "attributes_table": (_as_path, "run"),
    "external_endpoint": (str, "run"),
    "external_model": (str, "run"),
    "workers": (_as_int, "run"),
    "emit_masks": (_as_bool, "run"),
}


def _check_keys(values: Mapping[str, Any], origin: str) -> None:
    unknown = sorted(set(values) - set(KEYS))
    if unknown:
        raise ConfigError(f"unknown config key(s) {unknown} in {origin}; valid keys: {', '.join(sorted(KEYS))}")


def read_config_file(path) -> dict[str, Any]:
    path = Path(path)
    try:
        data = tomllib.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    # Accept either a flat file or one wrapped in [anonypipe].
    if set(data) == {"anonypipe"} and isinstance(data["anonypipe"], dict):
        data = data["anonypipe"]
    _check_keys(data, str(path))
    return data


def read_env(env: Mapping[str, str]) -> dict[str, Any]:
    values = {}
    for name, value in env.items():
        if not name.startswith(ENV_PREFIX) or name == ENV_PREFIX + "CONFIG":
            continue
        key = name[len(ENV_PREFIX) :].lower()
        if key in ("emotion_nouns", "extra"):
            raise ConfigError(f"{name}: table-valued keys can only be set in the config file")
        values[key] = value
    _check_keys(values, "environment")
    return values


def load_config(
    flags: Optional[Mapping[str, Any]] = None,
    env: Optional[Mapping[str, str]] = None,
    file_path=None,
) -> RunConfig:
    """Resolve a RunConfig with precedence flags > env > file > defaults.

    ``flags`` entries set to None are treated as absent. ``env`` defaults to
    ``os.environ``; ``ANONYPIPE_CONFIG`` there names a config file when
    ``file_path`` is not given.
    """
    env = os.environ if env is None else env
    flags = {k: v for k, v in (flags or {}).items() if v is not None}
    _check_keys(flags, "flags")
    if file_path is None:
        file_path = env.get(ENV_PREFIX + "CONFIG")
    merged: dict[str, Any] = {}
    sources: dict[str, str] = {}
    for origin, layer in (
        (str(file_path), read_config_file(file_path) if file_path else {}),
        ("environment", read_env(env)),
        ("flags", flags),
    ):
        for k, v in layer.items():
            merged[k] = v
            sources[k] = origin

    buckets: dict[str, dict[str, Any]] = {"pipeline": {}, "params": {}, "run": {}}
    for key, raw in merged.items():
        coerce, target = KEYS[key]
        try:
            buckets[target][key] = coerce(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{key} (from {sources[key]}): invalid value {raw!r}: {exc}") from None

    try:
        params = InpaintParams(**buckets["params"])
        pipeline = PipelineConfig(inpaint_params=params, **buckets["pipeline"])
        return RunConfig(pipeline=pipeline, **buckets["run"])
    except ContractError as exc:
        raise ConfigError(str(exc)) from None


def config_summary(cfg: RunConfig) -> dict[str, Any]:
    """Flat, JSON-friendly view of the resolved configuration."""
    p = cfg.pipeline
    out = {
        "min_face_side": p.min_face_side,
        "detection_confidence_threshold": p.detection_confidence_threshold,
        "mask_padding_ratio": p.mask_padding_ratio,
        "extraction_margin_ratio": p.extraction_margin_ratio,
        "seed_policy": str(p.seed_policy),
        "prompt_template": p.prompt_template,
        "emotion_nouns": dict(p.emotion_nouns),
        "blend_mode": str(p.blend_mode),
        "steps": p.inpaint_params.steps,
        "guidance_scale": p.inpaint_params.guidance_scale,
        "extra": dict(p.inpaint_params.extra),
    }
    for f in dataclasses.fields(RunConfig):
        if f.name == "pipeline":
            continue
        v = getattr(cfg, f.name)
        out[f.name] = str(v) if isinstance(v, Path) else v
    return out
