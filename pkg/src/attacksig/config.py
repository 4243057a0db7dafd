"""Pipeline configuration loaded from a single JSON file.

Recognised top-level keys::

    workdir, manifest, checkpoint   paths (must exist when given)
    seed                            master seed
    split                           "in-domain:0.9" or "out-of-domain:A02,A04"
    frame, mel, training, classifier, synth
                                    keyword arguments of FrameConfig, MelConfig,
                                    TrainingConfig, ClassifierConfig and
                                    SynthAttackerConfig.from_dict
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields

from .classifier import ClassifierConfig
from .corpus import ConfigError, SynthAttackerConfig, parse_split
from .embedder import MelConfig, TrainingConfig
from .features import FrameConfig

KNOWN_KEYS = {"workdir", "manifest", "checkpoint", "seed", "split", "frame", "mel", "training", "classifier", "synth"}


@dataclass
class PipelineConfig:
    workdir: str | None = None
    manifest: str | None = None
    checkpoint: str | None = None
    seed: int = 0
    split: str = "in-domain:0.9"
    frame: FrameConfig = field(default_factory=FrameConfig)
    mel: MelConfig = field(default_factory=MelConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    synth: SynthAttackerConfig | None = None

    def validate(self) -> None:
        problems = []
        for key in ("workdir", "manifest", "checkpoint"):
            path = getattr(self, key)
            if path is not None and not os.path.exists(path):
                problems.append(f"{key}: path {path!r} does not exist")
        try:
            parse_split(self.split)
        except ValueError as exc:
            problems.append(f"split: {exc}")
        if problems:
            raise ConfigError(problems)


def _section(cls, data, name):
    if data is None:
        return cls()
    allowed = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError([f"{name}.{k}: unknown key" for k in unknown])
    data = {k: tuple(v) if isinstance(v, list) else v for k, v in data.items()}
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError([f"{name}: {exc}"]) from None


def load_config(path) -> PipelineConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"config: not valid JSON ({exc})"]) from None
    if not isinstance(data, dict):
        raise ConfigError(["config: top level must be an object"])
    unknown = sorted(set(data) - KNOWN_KEYS)
    if unknown:
        raise ConfigError([f"{k}: unknown key" for k in unknown])
    cfg = PipelineConfig(
        workdir=data.get("workdir"),
        manifest=data.get("manifest"),
        checkpoint=data.get("checkpoint"),
        seed=int(data.get("seed", 0)),
        split=data.get("split", "in-domain:0.9"),
        frame=_section(FrameConfig, data.get("frame"), "frame"),
        mel=_section(MelConfig, data.get("mel"), "mel"),
        training=_section(TrainingConfig, data.get("training"), "training"),
        classifier=_section(ClassifierConfig, data.get("classifier"), "classifier"),
        synth=SynthAttackerConfig.from_dict(data["synth"]) if "synth" in data else None,
    )
    cfg.validate()
    return cfg
