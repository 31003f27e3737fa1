"""Run configuration: a JSON file plus dotted-key command-line overrides.

The configuration mirrors the pipeline surface: dataset profile, token
conventions, model sizes for the storyline/story pair, training
hyperparameters, generation settings, synthetic-corpus knobs, and all file
paths.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Optional

from .storyline import TemporalRelation, TokenConventions
from .training import TrainConfig


@dataclass(frozen=True)
class PathsConfig:
    """File locations; read roles must exist when a command needs them."""

    raw_corpus: Optional[str] = None
    raw_val_corpus: Optional[str] = None
    raw_test_corpus: Optional[str] = None
    corpus: str = "data/train.jsonl"
    val_corpus: str = "data/val.jsonl"
    test_corpus: str = "data/test.jsonl"
    events: Optional[str] = None
    votes: Optional[str] = None
    pretraining_text: Optional[str] = None
    init_storyline_checkpoint: Optional[str] = None
    checkpoints: str = "checkpoints"
    reports: str = "reports"
    generations: str = "reports/generations.jsonl"
    annotations: Optional[str] = None
    scorer_checkpoint: Optional[str] = None


@dataclass(frozen=True)
class ModelSection:
    embed_dim: int = 64
    hidden_dim: int = 128
    n_layers: int = 1
    max_len: int = 160
    dropout: float = 0.0
    rng_seed: int = 0


@dataclass(frozen=True)
class ConventionsSection:
    field_separator: str = " ; "
    eoe_token: str = "<eoe>"
    mask_token: str = "<mask>"
    before_token: str = "<before>"
    after_token: str = "<after>"
    vague_token: str = "<vague>"

    def build(self) -> TokenConventions:
        return TokenConventions(
            field_separator=self.field_separator,
            eoe_token=self.eoe_token,
            mask_token=self.mask_token,
            prompt_tokens={
                TemporalRelation.BEFORE: self.before_token,
                TemporalRelation.AFTER: self.after_token,
                TemporalRelation.VAGUE: self.vague_token,
            },
        )


@dataclass(frozen=True)
class GenerationSection:
    strategy: str = "greedy"            # greedy | sample
    temperature: float = 1.0
    rng_seed: int = 0
    prompts_source: str = "gold"        # gold | file | literal
    literal_prompts: Optional[str] = None
    prompts_file: Optional[str] = None
    one_after_only: bool = False
    max_records: Optional[int] = None


@dataclass(frozen=True)
class SyntheticSection:
    n_train: int = 10000
    n_val: int = 500
    n_test: int = 500
    n_events: int = 5
    after_rate: float = 0.2
    rng_seed: int = 100


@dataclass(frozen=True)
class RunConfig:
    profile: str = "rocstories_like"
    use_prompts: bool = True
    paths: PathsConfig = field(default_factory=PathsConfig)
    conventions: ConventionsSection = field(default_factory=ConventionsSection)
    storyline_model: ModelSection = field(default_factory=ModelSection)
    story_model: ModelSection = field(default_factory=lambda: ModelSection(rng_seed=1))
    train: TrainConfig = field(default_factory=TrainConfig)
    generation: GenerationSection = field(default_factory=GenerationSection)
    synthetic: SyntheticSection = field(default_factory=SyntheticSection)


def _from_dict(cls, data: dict):
    if not isinstance(data, dict):
        raise ValueError(f"expected an object for {cls.__name__}, got {type(data).__name__}")
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        f = known[name]
        if dataclasses.is_dataclass(f.type) or (
            isinstance(f.type, str) and f.type in _SECTION_TYPES
        ):
            section_cls = _SECTION_TYPES[f.type] if isinstance(f.type, str) else f.type
            kwargs[name] = _from_dict(section_cls, value)
        else:
            kwargs[name] = value
    return cls(**kwargs)


_SECTION_TYPES = {
    "PathsConfig": PathsConfig,
    "ModelSection": ModelSection,
    "ConventionsSection": ConventionsSection,
    "GenerationSection": GenerationSection,
    "SyntheticSection": SyntheticSection,
    "TrainConfig": TrainConfig,
    "RunConfig": RunConfig,
}


def _coerce(raw: str, current: Any) -> Any:
    """Parse an override string against the type of the value it replaces."""
    if raw.lower() in ("null", "none"):
        return None
    if isinstance(current, bool):
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"cannot parse {raw!r} as a boolean")
    if isinstance(current, int) and not isinstance(current, bool):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    if current is None:
        for parser in (int, float):
            try:
                return parser(raw)
            except ValueError:
                pass
        if raw.lower() in ("true", "false"):
            return raw.lower() == "true"
    return raw


def apply_override(config: RunConfig, dotted_key: str, raw_value: str) -> RunConfig:
    """Return a new config with `section.key=value` applied."""
    parts = dotted_key.split(".")
    def rebuild(obj, path):
        if not dataclasses.is_dataclass(obj):
            raise ValueError(f"cannot descend into {dotted_key!r}")
        name = path[0]
        if name not in {f.name for f in fields(obj)}:
            raise ValueError(f"unknown config key {dotted_key!r}")
        current = getattr(obj, name)
        if len(path) == 1:
            new_value = _coerce(raw_value, current)
        else:
            new_value = rebuild(current, path[1:])
        return dataclasses.replace(obj, **{name: new_value})

    return rebuild(config, parts)


def load_config(
    path: Optional[str | Path] = None,
    overrides: Optional[list[str]] = None,
) -> RunConfig:
    """Load a JSON run configuration and apply key=value overrides."""
    if path is not None:
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
        config = _from_dict(RunConfig, data)
    else:
        config = RunConfig()
    for item in overrides or []:
        if "=" not in item:
            raise ValueError(f"override must look like key=value, got {item!r}")
        key, _, value = item.partition("=")
        config = apply_override(config, key.strip(), value.strip())
    return config


def save_config(config: RunConfig, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(dataclasses.asdict(config), f, indent=2, sort_keys=True)
        f.write("\n")
