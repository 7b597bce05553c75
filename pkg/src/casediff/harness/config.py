"""Experiment configuration and its ``key = value`` file format."""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace

from ..casebase import SynthConfig

BACKENDS = ("l1", "siamese")


def _ints(text) -> tuple[int, ...]:
    if isinstance(text, (tuple, list)):
        return tuple(int(v) for v in text)
    return tuple(int(v) for v in str(text).replace(",", " ").split())


def _names(text) -> tuple[str, ...]:
    if isinstance(text, (tuple, list)):
        return tuple(text)
    return tuple(v for v in str(text).replace(",", " ").split())


@dataclass(frozen=True)
class ExperimentConfig:
    setting: str = "normal"
    retrieval_backends: tuple[str, ...] = BACKENDS
    fold_count: int = 10
    folds: tuple[int, ...] | None = None
    seed: int = 0
    data_path: str | None = None
    synth: SynthConfig = field(default_factory=SynthConfig)
    output: str = "report.csv"
    checkpoint_dir: str | None = None
    n_jobs: int = 1
    # shared hidden stack of the regressor and the adapter
    hidden_widths: tuple[int, ...] = (256, 64)
    dropout_rate: float = 0.2
    target_scaling: bool = True
    epochs: int = 50
    learning_rate: float = 1e-4
    batch_size: int = 32
    adapter_validation: str = "l1"
    embedding_dim: int = 32
    siamese_widths: tuple[int, ...] = (256,)
    siamese_dropout: float = 0.2
    margin: float = 1.0
    same_tolerance: float = 0.5
    negative_gap: float = 10.0

    def __post_init__(self):
        if self.setting not in ("normal", "novel"):
            raise ValueError(f"setting must be 'normal' or 'novel', got {self.setting!r}")
        backends = _names(self.retrieval_backends)
        if not backends or any(b not in BACKENDS for b in backends):
            raise ValueError(f"retrieval_backends must be drawn from {BACKENDS}, got {backends}")
        object.__setattr__(self, "retrieval_backends", tuple(dict.fromkeys(backends)))
        object.__setattr__(self, "hidden_widths", _ints(self.hidden_widths))
        object.__setattr__(self, "siamese_widths", _ints(self.siamese_widths))
        if self.folds is not None:
            folds = _ints(self.folds)
            if any(not 0 <= f < self.fold_count for f in folds) or not folds:
                raise ValueError(f"folds {folds} must lie in [0, {self.fold_count})")
            object.__setattr__(self, "folds", tuple(sorted(set(folds))))
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1 or self.n_jobs < 1:
            raise ValueError("batch_size and n_jobs must be >= 1")
        if self.adapter_validation not in ("l1", "retriever"):
            raise ValueError("adapter_validation must be 'l1' or 'retriever'")

    @property
    def fold_indices(self) -> tuple[int, ...]:
        return self.folds if self.folds is not None else tuple(range(self.fold_count))

    def override(self, **changes) -> ExperimentConfig:
        changes = {k: v for k, v in changes.items() if v is not None}
        synth_changes = {k[len("synth_"):]: changes.pop(k) for k in list(changes) if k.startswith("synth_")}
        cfg = replace(self, **changes)
        if synth_changes:
            cfg = replace(cfg, synth=replace(cfg.synth, **synth_changes))
        return cfg


# section -> {file key: (field name, parser)}
_SCHEMA = {
    "experiment": {
        "setting": ("setting", str),
        "retrieval_backend": ("retrieval_backends", _names),
        "fold_count": ("fold_count", int),
        "folds": ("folds", _ints),
        "seed": ("seed", int),
        "output": ("output", str),
        "checkpoint_dir": ("checkpoint_dir", str),
        "n_jobs": ("n_jobs", int),
    },
    "data": {
        "path": ("data_path", str),
        "case_count": ("synth_case_count", int),
        "feature_dim": ("synth_feature_dim", int),
        "noise_sigma": ("synth_noise_sigma", float),
        "seed": ("synth_seed", int),
    },
    "network": {
        "hidden_widths": ("hidden_widths", _ints),
        "dropout": ("dropout_rate", float),
        "target_scaling": ("target_scaling", "bool"),
    },
    "training": {
        "epochs": ("epochs", int),
        "learning_rate": ("learning_rate", float),
        "batch_size": ("batch_size", int),
    },
    "adapter": {
        "validation": ("adapter_validation", str),
    },
    "siamese": {
        "embedding_dim": ("embedding_dim", int),
        "hidden_widths": ("siamese_widths", _ints),
        "dropout": ("siamese_dropout", float),
        "margin": ("margin", float),
        "same_tolerance": ("same_tolerance", float),
        "negative_gap": ("negative_gap", float),
    },
}


def parse_config_text(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    parser.read_string(text)
    changes = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ValueError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ValueError(f"unknown key {key!r} in [{section}]")
            if not raw.strip():
                continue  # empty value keeps the default
            name, conv = _SCHEMA[section][key]
            changes[name] = parser.getboolean(section, key) if conv == "bool" else conv(raw)
    return (base or ExperimentConfig()).override(**changes)


def load_config(path, base: ExperimentConfig | None = None) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read(), base)


def dump_config(cfg: ExperimentConfig) -> str:
    """Render ``cfg`` in the config-file format accepted by :func:`parse_config_text`."""
    values = {f.name: getattr(cfg, f.name) for f in fields(cfg)}
    for f in fields(cfg.synth):
        values[f"synth_{f.name}"] = getattr(cfg.synth, f.name)
    lines = []
    for section, keys in _SCHEMA.items():
        lines.append(f"[{section}]")
        for key, (name, _) in keys.items():
            v = values[name]
            if v is None:
                continue
            if isinstance(v, tuple):
                v = ", ".join(str(x) for x in v)
            lines.append(f"{key} = {v}")
        lines.append("")
    return "\n".join(lines)
