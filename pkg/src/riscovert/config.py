"""Run configuration: a flat YAML file of dotted keys.

Example::

    angles.theta_re_deg: 70
    dataset.snr_levels_db: [3, 5, 7]
    sweep.powers_dbm: [none, 5, 10, 15, 20, 25]
    run.master_seed: 1234

Nested mappings are accepted too and flattened to dotted keys.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import yaml

from riscovert.channel import RisConfig
from riscovert.detector import TrainConfig
from riscovert.experiment import DatasetSpec, LinkConditions, Topology

FULL_SCALE_SAMPLES = 5000

DEFAULTS = {
    "ris.n": 16,
    "ris.kappa": 1.0,
    "ris.d_phase": "pi",
    "angles.theta_tr_deg": 45.0,
    "angles.theta_ri_deg": 30.0,
    "angles.theta_re_deg": 70.0,
    "pathloss.rho_tr": 1.0,
    "pathloss.rho_ri": 1.0,
    "pathloss.rho_re": 1.0,
    "dataset.samples_per_cell": 500,
    "dataset.snr_levels_db": [3.0, 5.0, 7.0],
    "dataset.signal_power_dbm": 30.0,
    "dataset.frame_length": 16,
    "detector.filters": 16,
    "detector.hidden": 64,
    "detector.dropout_rate": 0.1,
    "train.epochs": 20,
    "train.batch_size": 128,
    "train.learning_rate": 1e-3,
    "test.signal_power_dbm": 30.0,
    "test.snr_db": 5.0,
    "sweep.powers_dbm": [None, 5.0, 10.0, 15.0, 20.0, 25.0],
    "sweep.n_trials": 1000,
    "sweep.selection_power_dbm": 25.0,
    "budget.rel_acc": 1e-4,
    "attack.noise_aware": False,
    "run.output_dir": "runs/default",
    "run.master_seed": 20210601,
}

# Keys that do not change results and so stay out of the config hash.
UNHASHED = {"run.output_dir"}


class ConfigError(ValueError):
    pass


def flatten(mapping, prefix="") -> dict:
    out = {}
    for key, value in mapping.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            out.update(flatten(value, name + "."))
        else:
            out[name] = value
    return out


def _power(value):
    if value is None or (isinstance(value, str) and value.lower() in ("none", "off")):
        return None
    return float(value)


def _angle_const(value) -> float:
    if isinstance(value, str):
        text = value.strip().lower()
        if text == "pi":
            return math.pi
        if text.endswith("*pi"):
            return float(text[:-3]) * math.pi
    return float(value)


@dataclass(frozen=True)
class RunConfig:
    values: dict

    def __getitem__(self, key):
        return self.values[key]

    @property
    def topology(self) -> Topology:
        v = self.values
        ris = RisConfig(int(v["ris.n"]), float(v["ris.kappa"]), _angle_const(v["ris.d_phase"]))
        return Topology(float(v["angles.theta_tr_deg"]), float(v["angles.theta_ri_deg"]),
                        float(v["angles.theta_re_deg"]), ris, float(v["pathloss.rho_tr"]),
                        float(v["pathloss.rho_ri"]), float(v["pathloss.rho_re"]))

    @property
    def dataset(self) -> DatasetSpec:
        v = self.values
        return DatasetSpec(int(v["dataset.samples_per_cell"]),
                           tuple(float(s) for s in v["dataset.snr_levels_db"]),
                           float(v["dataset.signal_power_dbm"]), True,
                           int(v["dataset.frame_length"]))

    def train_config(self, seed) -> TrainConfig:
        v = self.values
        return TrainConfig(int(v["train.epochs"]), int(v["train.batch_size"]),
                           float(v["train.learning_rate"]), seed)

    @property
    def architecture(self) -> dict:
        v = self.values
        return dict(filters=int(v["detector.filters"]), hidden=int(v["detector.hidden"]),
                    dropout_rate=float(v["detector.dropout_rate"]))

    @property
    def conditions(self) -> LinkConditions:
        v = self.values
        return LinkConditions(float(v["test.signal_power_dbm"]), float(v["test.snr_db"]),
                              float(v["budget.rel_acc"]), bool(v["attack.noise_aware"]))

    @property
    def powers(self) -> list:
        return [_power(p) for p in self.values["sweep.powers_dbm"]]

    @property
    def selection_power(self):
        return _power(self.values["sweep.selection_power_dbm"])

    @property
    def n_trials(self) -> int:
        return int(self.values["sweep.n_trials"])

    @property
    def master_seed(self) -> int:
        return int(self.values["run.master_seed"])

    @property
    def output_dir(self) -> Path:
        return Path(self.values["run.output_dir"])

    def config_hash(self) -> str:
        hashed = {k: v for k, v in sorted(self.values.items()) if k not in UNHASHED}
        blob = json.dumps(hashed, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def validate(self) -> RunConfig:
        try:
            self.topology
            self.dataset
            self.train_config(0)
            self.architecture
            self.conditions
            powers = self.powers
            if not powers:
                raise ValueError("sweep.powers_dbm must not be empty")
            if self.selection_power not in powers:
                raise ValueError("sweep.selection_power_dbm must be one of sweep.powers_dbm")
            if self.n_trials < 1:
                raise ValueError("sweep.n_trials must be >= 1")
            self.master_seed
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"invalid configuration: {exc}") from exc
        return self


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    values = dict(DEFAULTS)
    if path is not None:
        try:
            raw = yaml.safe_load(Path(path).read_text()) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"config {path} must be a mapping of dotted keys")
        flat = flatten(raw)
        unknown = sorted(set(flat) - set(DEFAULTS))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        values.update(flat)
    values.update(overrides or {})
    return RunConfig(values).validate()


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(dict(sorted(cfg.values.items())), sort_keys=False)
