"""Experiment configuration file and master-seed fan-out.

The config file uses the shared sectioned text format.  A single master
seed drives every stage through the documented splitting rule

    stage_seed = SeedSequence([master_seed, STAGE_CODE, *indices])

(see ``simulator.derive_seed``), so stages can be rerun independently and
two runs with one master seed are byte-identical.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields
from pathlib import Path

from . import case39, textio
from .features import WINDOW_LENGTHS
from .simulator import derive_seed

STAGE_GEN = 1
STAGE_SIMULATE = 2
STAGE_EXTRACT = 3
STAGE_TRAIN = 4
STAGE_FINETUNE = 5
STAGE_EVAL = 6

KINDS = ("swap4", "remove_m")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    case: str = "ieee39"                 # registry name or path to a case file
    output_root: str = "runs/exp"
    kind: str = "swap4"
    topology_count: int = 10
    remove_m: int = 1
    scenarios_per_topology: int = 50
    load_low: float = 0.8
    load_high: float = 1.2
    windows: tuple = (0.05,)
    train_fraction: float = 0.7
    val_fraction: float = 0.1
    t2_topologies: int = 1
    temperature: float = 0.07
    learning_rate: float = 1e-3
    batch_size: int = 128
    epochs: int = 30
    master_seed: int = 1
    workers: int = 0                     # 0 = available parallelism

    def validate(self) -> "ExperimentConfig":
        if self.kind not in KINDS:
            raise ConfigError(f"topology kind must be one of {KINDS}")
        if self.remove_m not in (1, 2, 3):
            raise ConfigError("remove_m must be 1, 2, or 3")
        for w in self.windows:
            if w not in WINDOW_LENGTHS:
                raise ConfigError(f"window {w} not in {WINDOW_LENGTHS}")
        if not 0 < self.load_low <= self.load_high:
            raise ConfigError("need 0 < load_low <= load_high")
        if not 0 < self.train_fraction + self.val_fraction < 1:
            raise ConfigError("train+validation fractions must lie in (0, 1)")
        if self.case not in case39.available_cases() and not Path(self.case).exists():
            raise ConfigError(f"case {self.case!r} is neither a shipped case nor a file")
        return self

    # -- derived paths ------------------------------------------------------
    @property
    def root(self) -> Path:
        return Path(self.output_root)

    @property
    def topologies_dir(self) -> Path:
        return self.root / "topologies"

    @property
    def records_dir(self) -> Path:
        return self.root / "records"

    def dataset_dir(self, window: float) -> Path:
        return self.root / "dataset" / f"w{window:.2f}"

    @property
    def checkpoints_dir(self) -> Path:
        return self.root / "checkpoints"

    @property
    def reports_dir(self) -> Path:
        return self.root / "reports"

    def effective_workers(self) -> int:
        return self.workers if self.workers > 0 else (os.cpu_count() or 1)

    def stage_seed(self, stage: int, *indices) -> int:
        return derive_seed(self.master_seed, stage, *indices)

    def load_base_case(self):
        from .grid import load_case_file

        if self.case in case39.available_cases():
            return case39.load_case(self.case), case39.transformer_branches(self.case)
        return load_case_file(self.case), frozenset()


_SECTION_FIELDS = {
    "paths": ("case", "output_root"),
    "topology": ("kind", "topology_count", "remove_m"),
    "simulate": ("scenarios_per_topology", "load_low", "load_high"),
    "extract": ("windows",),
    "split": ("train_fraction", "val_fraction", "t2_topologies"),
    "train": ("temperature", "learning_rate", "batch_size", "epochs"),
    "run": ("master_seed", "workers"),
}


def load_config(path) -> ExperimentConfig:
    sections = textio.read_sections(path)
    values: dict = {}
    types = {f.name: f.type for f in fields(ExperimentConfig)}
    for sec_name, names in _SECTION_FIELDS.items():
        if sec_name not in sections:
            continue
        sec = sections[sec_name]
        for name in names:
            if name not in sec.kv:
                continue
            raw = sec.kv[name]
            if name == "windows":
                values[name] = tuple(float(v) for v in raw.split())
            elif types[name] == "int":
                values[name] = int(raw)
            elif types[name] == "float":
                values[name] = float(raw)
            else:
                values[name] = raw
    unknown = set()
    for sec_name, sec in sections.items():
        if sec_name not in _SECTION_FIELDS:
            unknown.add(sec_name)
            continue
        unknown |= {k for k in sec.kv if k not in _SECTION_FIELDS[sec_name]}
    if unknown:
        raise ConfigError(f"unknown config entries: {sorted(unknown)}")
    return ExperimentConfig(**values).validate()


def save_config(cfg: ExperimentConfig, path) -> None:
    sections = []
    for sec_name, names in _SECTION_FIELDS.items():
        sec = textio.Section(sec_name)
        for name in names:
            value = getattr(cfg, name)
            if name == "windows":
                value = " ".join(f"{w:g}" for w in value)
            sec.kv[name] = textio.fmt(value)
        sections.append(sec)
    textio.write_sections(path, sections)
