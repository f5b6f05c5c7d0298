"""Orchestration behind the CLI subcommands."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from msnilm.checkpoint import config_digest, load_checkpoint, read_checkpoint, save_checkpoint
from msnilm.data.activations import get_activations
from msnilm.data.sampling import (
    FLAG_FILTER_CHECKED,
    FLAG_TRAIN,
    dominated_points,
    sample_negative,
    sample_positive,
)
from msnilm.data.series import DataError, align, ingest_csv, resample_6s
from msnilm.data.shards import pairs_to_arrays, read_shard, write_shard
from msnilm.data.synth import Scenario, synth_generate, write_series_csv
from msnilm.evaluation import EvalReport, evaluate, write_reports
from msnilm.manifest import ExperimentManifest, ManifestError
from msnilm.model import (
    RECEPTIVE_FIELD_NOTE,
    ModelConfig,
    build_model,
    closed_form_parameter_count,
    count_parameters,
)
from msnilm.training import train

logger = logging.getLogger(__name__)


def shard_path(manifest: ExperimentManifest, appliance: str, split: str) -> Path:
    return manifest.output_dir / "shards" / f"{appliance.replace(' ', '_')}_{split}.bin"


def model_dir(manifest: ExperimentManifest, appliance: str) -> Path:
    return manifest.output_dir / "models" / appliance.replace(" ", "_")


def manifest_digest(manifest: ExperimentManifest, appliance: str) -> str:
    entry = manifest.appliances[appliance]
    return config_digest(
        manifest.model, manifest.train,
        {"appliance": appliance, "window_length": entry.window_length,
         "spec": [entry.spec.on_power_threshold, entry.spec.min_on_duration, entry.spec.min_off_duration]},
    )


# -- synth -------------------------------------------------------------
def run_synth(manifest: ExperimentManifest) -> Dict[str, Dict[str, Path]]:
    """Write the CSV files of every synthetic house named in the manifest."""
    cfg = manifest.synthetic
    if not cfg:
        raise ManifestError("manifest has no 'synthetic' section")
    scenario = Scenario.from_dict({k: v for k, v in cfg.items() if k != "houses"})
    written = {}
    for house, offset in (cfg.get("houses") or {}).items():
        if house not in manifest.houses:
            raise ManifestError(f"synthetic house {house!r} has no entry under 'houses'")
        entry = manifest.houses[house]
        res = synth_generate(scenario, np.random.default_rng([manifest.seed, int(offset)]))
        write_series_csv(res.aggregate, entry.aggregate)
        files = {"aggregate": entry.aggregate}
        for name, series in res.appliances.items():
            if name in entry.appliances:
                write_series_csv(series, entry.appliances[name])
                files[name] = entry.appliances[name]
        written[house] = files
    return written


# -- prepare -----------------------------------------------------------
@dataclass
class PrepareCounts:
    activations: int = 0
    positives: int = 0
    positive_skipped: int = 0
    negatives: int = 0
    negative_skipped: int = 0
    discarded_short: int = 0
    discarded_dominated: int = 0

    def add(self, other: "PrepareCounts") -> None:
        for k, v in vars(other).items():
            setattr(self, k, getattr(self, k) + v)


def _prepare_house(args):
    manifest, house, appliance, split, house_index, app_index = args
    entry = manifest.appliances[appliance]
    h = manifest.houses[house]
    period = float(manifest.sampling["period"])
    fill = float(manifest.sampling["max_fill_gap"])
    try:
        agg = resample_6s(ingest_csv(h.aggregate), period, fill)
        app = resample_6s(ingest_csv(h.appliances[appliance]), period, fill)
        agg, app = align(agg, app)
    except (DataError, OSError) as exc:
        raise DataError(f"house {house}, appliance {appliance}: {exc}") from exc

    rng = np.random.default_rng([manifest.seed, house_index, app_index])
    W = entry.window_length
    acts = get_activations(app, entry.spec)
    counts = PrepareCounts(activations=len(acts))
    pairs = []
    is_train = split == "train"
    for act in acts:
        for _ in range(int(manifest.sampling["positives_per_activation"])):
            p = sample_positive(agg, app, act, W, rng)
            if p is None:
                counts.positive_skipped += 1
                continue
            if is_train:
                p.flags |= FLAG_TRAIN | FLAG_FILTER_CHECKED
                if p.act_len < W / 3:
                    counts.discarded_short += 1
                    continue
                if dominated_points(p) > W / 2:
                    counts.discarded_dominated += 1
                    continue
            counts.positives += 1
            pairs.append(p)
        if int(manifest.sampling["negatives_per_activation"]) > 0:
            n = sample_negative(agg, app, act, W)
            if n is None:
                counts.negative_skipped += 1
                continue
            if is_train:
                n.flags |= FLAG_TRAIN
            counts.negatives += 1
            pairs.append(n)
    return pairs, counts


def run_prepare(manifest: ExperimentManifest, workers: int = 1) -> dict:
    """Build train and test shards for every target appliance; returns the summary."""
    manifest.check_inputs()
    if not manifest.train_houses and not manifest.test_houses:
        raise ManifestError("split lists no houses")
    tasks = []
    for ai, appliance in enumerate(manifest.targets):
        for split in ("train", "test"):
            for house in manifest.houses_for(appliance, split):
                hi = list(manifest.houses).index(house)
                tasks.append((manifest, house, appliance, split, hi, ai))

    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_prepare_house, tasks))
    else:
        results = [_prepare_house(t) for t in tasks]

    summary = {"seed": manifest.seed, "appliances": {}}
    for appliance in manifest.targets:
        entry = manifest.appliances[appliance]
        summary["appliances"][appliance] = {
            "on_power_threshold": entry.spec.on_power_threshold,
            "min_on_duration": entry.spec.min_on_duration,
            "min_off_duration": entry.spec.min_off_duration,
            "window_length": entry.window_length,
        }
        for split in ("train", "test"):
            pairs, counts = [], PrepareCounts()
            for task, (p, c) in zip(tasks, results):
                if task[2] == appliance and task[3] == split:
                    pairs.extend(p)
                    counts.add(c)
            write_shard(shard_path(manifest, appliance, split), pairs)
            summary["appliances"][appliance][split] = {
                **vars(counts), "pairs": len(pairs),
                "houses": manifest.houses_for(appliance, split),
                "aggregate_power": {h: manifest.houses[h].power for h in manifest.houses_for(appliance, split)},
            }
    out = manifest.output_dir
    out.mkdir(parents=True, exist_ok=True)
    (out / "prepare_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    (out / "prepare_summary.txt").write_text(format_summary(summary))
    return summary


def format_summary(summary: dict) -> str:
    lines = [f"master seed {summary['seed']}"]
    for name, s in summary["appliances"].items():
        lines.append(
            f"{name}: on >= {s['on_power_threshold']:g} W, min on {s['min_on_duration']:g} s, "
            f"min off {s['min_off_duration']:g} s, window {s['window_length']} points"
        )
        for split in ("train", "test"):
            c = s[split]
            line = (f"  {split:5s} houses={','.join(c['houses']) or '-'} activations={c['activations']} "
                    f"positives={c['positives']} negatives={c['negatives']} "
                    f"skipped={c['positive_skipped'] + c['negative_skipped']}")
            if split == "train":
                line += (f" discarded(short activation)={c['discarded_short']}"
                         f" discarded(aggregate > 3x appliance)={c['discarded_dominated']}")
            apparent = [h for h, p in c["aggregate_power"].items() if p == "apparent"]
            if apparent:
                line += f" apparent-power aggregate: {','.join(apparent)}"
            lines.append(line)
    return "\n".join(lines) + "\n"


# -- train -------------------------------------------------------------
def _load_pairs(manifest, appliance, split):
    path = shard_path(manifest, appliance, split)
    if not path.is_file():
        raise DataError(f"{path} not found; run `msnilm prepare` first")
    return read_shard(path)


def run_train(manifest: ExperimentManifest) -> Dict[str, object]:
    results = {}
    cfg = manifest.train_config()
    for appliance in manifest.targets:
        pairs = _load_pairs(manifest, appliance, "train")
        if not pairs:
            raise DataError(f"training shard for {appliance} is empty")
        x, y, _ = pairs_to_arrays(pairs)
        model = build_model(manifest.model_config(), seed=manifest.seed)
        meta = {"seed": manifest.seed, "appliance": appliance,
                "config_digest": manifest_digest(manifest, appliance)}
        out = model_dir(manifest, appliance)
        if cfg.epochs == 0:
            out.mkdir(parents=True, exist_ok=True)
            save_checkpoint(out / "checkpoint.bin", model, {**meta, "epoch": 0})
            (out / "loss_curve.csv").write_text("step,epoch,train_loss,val_loss\n")
            results[appliance] = None
            continue
        results[appliance] = train(model, x, y, cfg, out_dir=out, meta=meta)
    return results


# -- evaluate ----------------------------------------------------------
def run_evaluate(manifest: ExperimentManifest, checkpoint: Optional[Path] = None,
                 dump: bool = False) -> List[EvalReport]:
    reports = []
    for appliance in manifest.targets:
        pairs = _load_pairs(manifest, appliance, "test")
        if not pairs:
            raise DataError(f"test shard for {appliance} is empty")
        ckpt = Path(checkpoint) if checkpoint else model_dir(manifest, appliance) / "checkpoint.bin"
        if not ckpt.is_file():
            raise DataError(f"{ckpt} not found; run `msnilm train` first")
        model, meta = load_checkpoint(ckpt)
        digest = manifest_digest(manifest, appliance)
        if meta.get("config_digest") and meta["config_digest"] != digest:
            logger.warning("checkpoint %s was trained with config %s but the manifest hashes to %s",
                           ckpt, meta["config_digest"], digest)
        entry = manifest.appliances[appliance]
        dump_path = manifest.output_dir / "reports" / f"{appliance.replace(' ', '_')}_predictions.csv"
        reports.append(evaluate(model, pairs, entry.spec, appliance, max_power=entry.max_power,
                                dump_path=dump_path if dump else None, config_digest=digest,
                                seed=manifest.seed))
    out = manifest.output_dir / "reports"
    write_reports(out / "report.csv", reports)
    (out / "report.txt").write_text("\n\n".join(r.table() for r in reports) + "\n")
    return reports


# -- inspect -----------------------------------------------------------
def inspect_checkpoint(path) -> str:
    header, tensors = read_checkpoint(path)
    model, _ = load_checkpoint(path)
    cfg = model.config
    lines = [f"checkpoint {path}", f"model kind {header['model'].get('kind')}"]
    for name, arr in tensors.items():
        lines.append(f"  {name:45s} {'x'.join(map(str, arr.shape)):>14s}  {arr.size}")
    if isinstance(cfg, ModelConfig):
        fields = cfg.receptive_fields()
        for i, (n, s) in enumerate(zip(cfg.blocks_per_body, fields)):
            lines.append(f"body {i}: {n} blocks, dilations 1..{2 ** (n - 1)}, receptive field {s} points "
                         f"({s * 6} s at 6 s)")
        if cfg.kernel_size == 5 and list(cfg.blocks_per_body) == [2, 3, 4, 5]:
            lines.append(RECEPTIVE_FIELD_NOTE)
    total = count_parameters(model)
    lines.append(f"total parameters {total} (closed form {closed_form_parameter_count(cfg)})")
    meta = header.get("meta") or {}
    if meta:
        lines.append("meta " + json.dumps(meta, sort_keys=True))
    return "\n".join(lines)
