"""Run configuration: one YAML document with dotted-path overrides.

A run config collects everything a command needs (paths, stages, synth
knobs, training hyperparameters) so an experiment is reproducible from the
manifest alone. ``--set section.key=value`` overrides individual entries;
values are parsed as YAML scalars.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .errors import ConfigError, IoError
from .losses import Margins
from .stages import StagePair, parse_stage
from .synth import SynthConfig
from .trainer import TrainConfig

DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "out": "runs/default",
    "dataset": None,
    "stages": ["1->2", "2->3"],
    "jobs": 1,
    "synth": {
        "num_identities": 214,
        "feature_dim": 64,
        "rp_count": 3,
        "class_center_scale": 1.0,
        "drift_sigma": {"0->1": 0.3, "1->2": 0.3, "2->3": 0.3},
        "dropout_per_rp": {},
        "stage_memberships": None,
        "clips_per_footage": 7,
        "clip_noise_sigma": 0.02,
        "plant_late_stage": False,
        "late_stage_ratio": 0.5,
    },
    "train": {
        "loss_kind": "triplet",
        "m1": 0.2,
        "m2": 0.1,
        "epochs": 50,
        "batch_identities": 8,
        "samples_per_identity": 2,
        "negatives_per_batch": 4,
        "learning_rate": 1e-3,
        "beta1": 0.9,
        "beta2": 0.999,
        "adam_eps": 1e-8,
        "mining": "random",
        "hidden_dim": 512,
        "embed_dim": 512,
        "folds": 10,
    },
    "eval": {
        "max_rank": 20,
    },
}


def _deep_merge(base: dict, override: dict) -> dict:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_config(path: str | Path | None, overrides: list[str] | None = None) -> dict[str, Any]:
    """Merge defaults, an optional YAML file, and --set overrides."""
    doc: dict[str, Any] = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise IoError(f"cannot read config {path}: {exc}") from exc
        try:
            loaded = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"config {path} must be a mapping")
        doc = loaded
    # Deep copy so --set overrides can never leak into the module defaults.
    merged = _deep_merge(copy.deepcopy(DEFAULTS), doc)
    for item in overrides or []:
        merged = _apply_override(merged, item)
    return merged


def _apply_override(config: dict[str, Any], item: str) -> dict[str, Any]:
    if "=" not in item:
        raise ConfigError(f"override {item!r} must look like section.key=value")
    dotted, _, raw = item.partition("=")
    keys = [k for k in dotted.strip().split(".") if k]
    if not keys:
        raise ConfigError(f"override {item!r} has an empty key path")
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse override value {raw!r}: {exc}") from exc
    node = config
    for key in keys[:-1]:
        child = node.get(key)
        if not isinstance(child, dict):
            child = {}
            node[key] = child
        node = child
    node[keys[-1]] = value
    return config


@dataclass
class RunConfig:
    """Typed view over the merged config document."""

    seed: int
    out: Path
    dataset: Path | None
    stages: list[StagePair]
    jobs: int
    synth: SynthConfig
    plant_late_stage: bool
    late_stage_ratio: float
    train: TrainConfig
    max_rank: int
    raw: dict[str, Any] = field(repr=False, default_factory=dict)


def build_run_config(doc: dict[str, Any]) -> RunConfig:
    try:
        seed = int(doc["seed"])
        stages = [parse_stage(str(s)) for s in doc["stages"]]
        synth_doc = dict(doc["synth"])
        plant = bool(synth_doc.pop("plant_late_stage", False))
        ratio = float(synth_doc.pop("late_stage_ratio", 0.5))
        synth_doc["drift_sigma"] = {
            str(k): float(v) for k, v in (synth_doc.get("drift_sigma") or {}).items()
        }
        synth_doc["dropout_per_rp"] = {
            int(k): float(v) for k, v in (synth_doc.get("dropout_per_rp") or {}).items()
        }
        memberships = synth_doc.get("stage_memberships")
        synth_doc["stage_memberships"] = (
            (int(memberships[0]), int(memberships[1])) if memberships else None
        )
        synth = SynthConfig(seed=seed, **synth_doc)
        train_doc = dict(doc["train"])
        margins = Margins(float(train_doc.pop("m1", 0.2)), float(train_doc.pop("m2", 0.1)))
        train = TrainConfig(seed=seed, margins=margins, **train_doc)
        return RunConfig(
            seed=seed,
            out=Path(doc["out"]),
            dataset=Path(doc["dataset"]) if doc.get("dataset") else None,
            stages=stages,
            jobs=int(doc.get("jobs", 1)),
            synth=synth,
            plant_late_stage=plant,
            late_stage_ratio=ratio,
            train=train,
            max_rank=int(doc["eval"]["max_rank"]),
            raw=doc,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc
