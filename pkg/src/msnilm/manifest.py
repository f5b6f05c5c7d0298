"""Experiment manifest: the single YAML file that drives every CLI command.

Schema (paths are relative to the manifest file)::

    seed: 1234                      # master seed for every random stream
    output_dir: out
    targets: [kettle]               # appliances to prepare, train and evaluate
    appliances:                     # activation thresholds and window lengths
      kettle: {on_power_threshold: 2000, min_on_duration: 12,
               min_off_duration: 0, window_length: 64, max_power: null}
    houses:
      house_1:
        aggregate: {path: data/house_1/aggregate.csv, power: active}
        appliances: {kettle: data/house_1/kettle.csv}
    split:
      train: [house_1]
      test: [house_5]
      exclude: {house_4: [microwave]}
    sampling: {positives_per_activation: 1, negatives_per_activation: 1,
               period: 6, max_fill_gap: 180}
    model: {kind: multiscale, channels: 96, ...}
    train: {batch_size: 32, epochs: 100, ...}
    synthetic:                      # optional; consumed by `msnilm synth`
      length: 150000
      noise_sigma: 30
      appliances: [{name: kettle, amplitude: 2000, on_points: [36, 60], off_points: [120, 400]}]
      houses: {house_1: 0}          # house -> seed offset
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import yaml

from msnilm.data.activations import ActivationSpec
from msnilm.model import config_from_dict
from msnilm.training import TrainConfig


class ManifestError(ValueError):
    """The manifest is malformed or references missing inputs."""


@dataclass
class ApplianceEntry:
    spec: ActivationSpec
    window_length: int
    max_power: Optional[float] = None


@dataclass
class HouseEntry:
    aggregate: Path
    power: str
    appliances: Dict[str, Path]


@dataclass
class ExperimentManifest:
    path: Path
    seed: int
    output_dir: Path
    targets: List[str]
    appliances: Dict[str, ApplianceEntry]
    houses: Dict[str, HouseEntry]
    train_houses: List[str]
    test_houses: List[str]
    exclude: Dict[str, List[str]] = field(default_factory=dict)
    sampling: dict = field(default_factory=dict)
    model: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    synthetic: Optional[dict] = None
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def base_dir(self) -> Path:
        return self.path.parent

    def model_config(self):
        return config_from_dict(self.model)

    def train_config(self) -> TrainConfig:
        return TrainConfig.from_dict({**self.train, "seed": self.seed})

    def houses_for(self, appliance: str, split: str) -> List[str]:
        names = self.train_houses if split == "train" else self.test_houses
        return [h for h in names
                if appliance in self.houses[h].appliances and appliance not in self.exclude.get(h, [])]

    def check_inputs(self) -> None:
        """Raise :class:`ManifestError` if any referenced input file is missing."""
        missing = []
        for name, house in self.houses.items():
            if name not in self.train_houses and name not in self.test_houses:
                continue
            paths = [house.aggregate] + [p for a, p in house.appliances.items() if a in self.targets]
            missing += [str(p) for p in paths if not p.is_file()]
        if missing:
            raise ManifestError(f"{len(missing)} input file(s) missing, e.g. {missing[0]}")


_SAMPLING_DEFAULTS = {"positives_per_activation": 1, "negatives_per_activation": 1,
                      "period": 6.0, "max_fill_gap": 180.0}


def _require(d: dict, key: str, where: str):
    if not isinstance(d, dict) or key not in d:
        raise ManifestError(f"{where}: missing required key {key!r}")
    return d[key]


def load_manifest(path, seed: Optional[int] = None, output_dir=None) -> ExperimentManifest:
    """Parse and validate a manifest. ``seed``/``output_dir`` override the file."""
    path = Path(path).resolve()
    if not path.is_file():
        raise ManifestError(f"manifest {path} does not exist")
    try:
        raw = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as exc:
        raise ManifestError(f"{path}: invalid YAML: {exc}") from None
    if not isinstance(raw, dict):
        raise ManifestError(f"{path}: top level must be a mapping")
    base = path.parent

    appliances = {}
    for name, entry in (_require(raw, "appliances", "manifest") or {}).items():
        try:
            spec = ActivationSpec(float(entry["on_power_threshold"]), float(entry["min_on_duration"]),
                                  float(entry["min_off_duration"]))
            appliances[name] = ApplianceEntry(spec, int(entry["window_length"]), entry.get("max_power"))
        except (KeyError, TypeError, ValueError) as exc:
            raise ManifestError(f"appliance {name!r}: {exc}") from None
        if appliances[name].window_length < 1:
            raise ManifestError(f"appliance {name!r}: window_length must be positive")

    targets = list(raw.get("targets") or appliances)
    for t in targets:
        if t not in appliances:
            raise ManifestError(f"target {t!r} has no entry under 'appliances'")

    houses = {}
    for name, entry in (raw.get("houses") or {}).items():
        agg = _require(entry, "aggregate", f"house {name!r}")
        agg = {"path": agg} if isinstance(agg, str) else agg
        power = agg.get("power", "active")
        if power not in ("active", "apparent"):
            raise ManifestError(f"house {name!r}: aggregate power must be 'active' or 'apparent'")
        apps = {a: (base / p).resolve() for a, p in (entry.get("appliances") or {}).items()}
        agg_path = (base / _require(agg, "path", f"house {name!r} aggregate")).resolve()
        houses[name] = HouseEntry(agg_path, power, apps)

    split = raw.get("split") or {}
    train_h, test_h = list(split.get("train") or []), list(split.get("test") or [])
    for h in train_h + test_h:
        if h not in houses:
            raise ManifestError(f"split references unknown house {h!r}")
    if set(train_h) & set(test_h):
        raise ManifestError(f"houses in both train and test: {sorted(set(train_h) & set(test_h))}")

    sampling = {**_SAMPLING_DEFAULTS, **(raw.get("sampling") or {})}
    unknown = set(sampling) - set(_SAMPLING_DEFAULTS)
    if unknown:
        raise ManifestError(f"unknown sampling keys {sorted(unknown)}")

    model = dict(raw.get("model") or {"kind": "multiscale"})
    try:
        config_from_dict(model)
        TrainConfig.from_dict({**(raw.get("train") or {}), "seed": 0})
    except (TypeError, ValueError) as exc:
        raise ManifestError(f"invalid model/train config: {exc}") from None

    m_seed = seed if seed is not None else raw.get("seed", 0)
    out = Path(output_dir) if output_dir is not None else (base / raw.get("output_dir", "out")).resolve()
    return ExperimentManifest(
        path=path, seed=int(m_seed), output_dir=out, targets=targets, appliances=appliances,
        houses=houses, train_houses=train_h, test_houses=test_h,
        exclude={h: list(v) for h, v in (split.get("exclude") or {}).items()},
        sampling=sampling, model=model, train=dict(raw.get("train") or {}),
        synthetic=raw.get("synthetic"), raw=raw,
    )
