"""Experiment configuration documents (YAML or JSON).

Schema (all keys optional unless noted)::

    seed: 7                  # root seed; every random stream derives from it
    k: 10                    # folds
    budget: null             # questions per session; null = whole pool
    dataset:                 # required, one of
      file: responses.csv
      synthetic: {kind: bayes-net, students: 280, questions: 20,
                  network: {model: simple_3s}}
    models:                  # required, non-empty
      - {label: irt, type: irt, max_iter: 500, tol: 1.0e-7}
      - {label: s3, type: bn, model: simple_3s, max_iter: 300, tol: 1.0e-4,
         pseudocount: 0.5}
      - {label: eo, type: bn, model: expert_old, skill_map: {S1: [Q1, Q8], ...},
         question_cpd: noisy-or}
      - {label: en, type: bn, model: expert_new}
      - {label: net, type: bn, network: {nodes: [...], edges: [...]}}
      - {label: nn5, type: nn, hidden: 5, epochs: 500, learning_rate: 0.5,
         batch_size: null}
      - {label: s3_rand, type: bn, model: simple_3s, selection: random}
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import yaml

from .dataio import SyntheticSpec
from .errors import ConfigError

FAMILIES = ("irt", "bn", "nn")
SELECTIONS = ("adaptive", "random")

_FAMILY_OPTIONS = {
    "irt": {"max_iter", "tol", "newton_steps"},
    "bn": {"model", "skill_map", "question_cpd", "network", "max_iter", "tol", "pseudocount"},
    "nn": {"hidden", "epochs", "learning_rate", "batch_size"},
}


@dataclass(frozen=True)
class ModelSpec:
    label: str
    family: str
    options: Mapping[str, Any] = field(default_factory=dict)
    selection: str = "adaptive"

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "ModelSpec":
        doc = dict(doc)
        try:
            label = str(doc.pop("label"))
            family = doc.pop("type")
        except KeyError as exc:
            raise ConfigError(f"model entry needs {exc.args[0]!r}") from exc
        if family not in FAMILIES:
            raise ConfigError(f"model {label!r}: unknown type {family!r}")
        selection = doc.pop("selection", "adaptive")
        if selection not in SELECTIONS:
            raise ConfigError(f"model {label!r}: selection must be one of {SELECTIONS}")
        unknown = set(doc) - _FAMILY_OPTIONS[family]
        if unknown:
            raise ConfigError(f"model {label!r}: unknown options {sorted(unknown)}")
        if family == "bn" and ("model" in doc) == ("network" in doc):
            raise ConfigError(f"model {label!r}: give exactly one of 'model' or 'network'")
        return cls(label, family, doc, selection)

    def fit_key(self) -> str:
        """Identity of the fitted model; specs differing only in selection share it."""
        return json.dumps({"family": self.family, "options": self.options}, sort_keys=True, default=str)


@dataclass
class ExperimentConfig:
    models: list[ModelSpec]
    data_file: Path | None = None
    synthetic: SyntheticSpec | None = None
    k: int = 10
    seed: int = 0
    budget: int | None = None

    def __post_init__(self):
        if not self.models:
            raise ConfigError("model roster is empty")
        labels = [m.label for m in self.models]
        if len(set(labels)) != len(labels):
            raise ConfigError("model labels must be unique")
        if self.k < 2:
            raise ConfigError("k must be at least 2")
        if (self.data_file is None) == (self.synthetic is None):
            raise ConfigError("dataset needs exactly one of 'file' or 'synthetic'")

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any], base_dir: Path | None = None) -> "ExperimentConfig":
        unknown = set(doc) - {"seed", "k", "budget", "dataset", "models"}
        if unknown:
            raise ConfigError(f"unknown top-level keys {sorted(unknown)}")
        seed = int(doc.get("seed", 0))
        dataset = doc.get("dataset") or {}
        data_file = synthetic = None
        if "file" in dataset:
            data_file = Path(dataset["file"])
            if base_dir is not None and not data_file.is_absolute():
                data_file = base_dir / data_file
        if "synthetic" in dataset:
            syn = dict(dataset["synthetic"])
            syn.setdefault("seed", seed)
            synthetic = SyntheticSpec.from_dict(syn)
        models = [ModelSpec.from_dict(m) for m in doc.get("models") or ()]
        return cls(models, data_file, synthetic, int(doc.get("k", 10)), seed, doc.get("budget"))

    def model(self, label: str) -> ModelSpec:
        for m in self.models:
            if m.label == label:
                return m
        raise ConfigError(f"no model labelled {label!r}")


def read_document(path: str | Path) -> dict:
    with open(path, encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: expected a mapping at top level")
    return doc


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    return ExperimentConfig.from_dict(read_document(path), base_dir=path.parent)
