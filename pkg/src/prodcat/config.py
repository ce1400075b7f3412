"""Pipeline configuration and its sectioned TOML file format.

Sections and keys::

    [knn]       metric, n_neighbors
    [forest]    max_depth, max_features, n_estimators, n_jobs, oob_score, random_state
    [gbt]       eval_metric, learning_rate, min_split_loss, objective, predictor,
                tree_method, n_rounds, max_depth, reg_lambda
    [pipeline]  top_category_model, bottom_category_model, color_model,
                knn_sample_size, forest_sample_size, gbt_sample_size,
                rebalance_policy, smote_k, imputer_k,
                minhash_seed, minhash_components, ngram_size, seed

Absent keys take their defaults; unknown sections or keys are rejected.
"""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Mapping

from prodcat.dataset import TARGETS, tomllib
from prodcat.errors import PipelineError
from prodcat.forest import ForestParams
from prodcat.gbt import GbtParams
from prodcat.knn import KnnParams

MODEL_KINDS = ("knn", "forest", "gbt")


class ConfigError(PipelineError):
    pass


@dataclass(frozen=True)
class PipelineOptions:
    top_category_model: str = "gbt"
    bottom_category_model: str = "knn"
    color_model: str = "knn"
    knn_sample_size: int = 25000
    forest_sample_size: int = 10000
    gbt_sample_size: int = 10000
    rebalance_policy: str = "median"
    smote_k: int = 5
    imputer_k: int = 5
    minhash_seed: int = 0
    minhash_components: int = 128
    ngram_size: int = 3
    seed: int = 0

    def __post_init__(self):
        for target in TARGETS:
            kind = getattr(self, f"{target}_model")
            if kind not in MODEL_KINDS:
                raise ConfigError(f"pipeline.{target}_model must be one of {MODEL_KINDS}, got {kind!r}")
        for key in ("knn_sample_size", "forest_sample_size", "gbt_sample_size", "smote_k", "imputer_k",
                    "minhash_components", "ngram_size"):
            if getattr(self, key) < 1:
                raise ConfigError(f"pipeline.{key} must be >= 1, got {getattr(self, key)}")
        if self.rebalance_policy != "median":
            raise ConfigError(f"pipeline.rebalance_policy must be 'median', got {self.rebalance_policy!r}")


@dataclass(frozen=True)
class PipelineConfig:
    knn: KnnParams = field(default_factory=KnnParams)
    forest: ForestParams = field(default_factory=ForestParams)
    gbt: GbtParams = field(default_factory=GbtParams)
    pipeline: PipelineOptions = field(default_factory=PipelineOptions)

    def model_for(self, target: str) -> str:
        return getattr(self.pipeline, f"{target}_model")

    def params_for(self, kind: str):
        return getattr(self, kind)

    def sample_size(self, kind: str) -> int:
        return getattr(self.pipeline, f"{kind}_sample_size")

    @property
    def routing(self) -> dict[str, str]:
        return {t: self.model_for(t) for t in TARGETS}

    def with_routing(self, **routing: str) -> "PipelineConfig":
        return replace(self, pipeline=replace(self.pipeline, **{f"{t}_model": k for t, k in routing.items()}))

    def to_dict(self) -> dict:
        return {name: asdict(getattr(self, name)) for name in ("knn", "forest", "gbt", "pipeline")}

    @classmethod
    def from_dict(cls, raw: Mapping[str, Mapping[str, Any]]) -> "PipelineConfig":
        sections = {"knn": KnnParams, "forest": ForestParams, "gbt": GbtParams, "pipeline": PipelineOptions}
        unknown = set(raw) - set(sections)
        if unknown:
            raise ConfigError(f"unknown config section(s): {sorted(unknown)}")
        built = {}
        for name, klass in sections.items():
            values = dict(raw.get(name, {}))
            types = {f.name: f.type for f in fields(klass)}
            bad = set(values) - set(types)
            if bad:
                raise ConfigError(f"unknown key(s) in [{name}]: {sorted(bad)}")
            defaults = klass()
            for key, value in values.items():
                values[key] = _coerce(name, key, value, type(getattr(defaults, key)))
            try:
                built[name] = klass(**values)
            except ConfigError:
                raise
            except PipelineError as exc:
                raise ConfigError(f"[{name}] {exc}") from None
        return cls(**built)


def _coerce(section: str, key: str, value: Any, expected: type) -> Any:
    where = f"[{section}] {key}"
    if expected is bool:
        if isinstance(value, bool):
            return value
    elif expected is int:
        if isinstance(value, int) and not isinstance(value, bool):
            return value
    elif expected is float:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
    elif expected is str:
        if isinstance(value, str):
            return value
    raise ConfigError(f"{where}: expected {expected.__name__}, got {type(value).__name__} {value!r}")


def parse_config(path: str | os.PathLike | None) -> PipelineConfig:
    """Read a config file; ``None`` gives the all-defaults configuration."""
    if path is None:
        return PipelineConfig()
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file {path} does not exist") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    for name, section in raw.items():
        if not isinstance(section, dict):
            raise ConfigError(f"{path}: top-level key {name!r} is not a [section]")
    return PipelineConfig.from_dict(raw)


def dump_config(config: PipelineConfig) -> str:
    """Render ``config`` in the file format read by :func:`parse_config`."""
    import json

    lines = []
    for name, values in config.to_dict().items():
        lines.append(f"[{name}]")
        for key, value in values.items():
            lines.append(f"{key} = {json.dumps(value)}")
        lines.append("")
    return "\n".join(lines)
