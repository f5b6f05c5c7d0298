"""On/off classification metrics, MAE and evaluation reports."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, NamedTuple, Optional, Sequence

import numpy as np

from msnilm.data.activations import ActivationSpec
from msnilm.data.sampling import SamplePair
from msnilm.tensor import Tensor


def denormalize(pred, scale: float) -> np.ndarray:
    if not scale > 0:
        raise ValueError(f"scale must be positive, got {scale}")
    return np.asarray(pred, dtype=np.float64) * scale


def classify_on_off(power, threshold: float) -> np.ndarray:
    if threshold < 0:
        raise ValueError(f"threshold must be non-negative, got {threshold}")
    return np.asarray(power) >= threshold


@dataclass
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp, self.tn + other.tn, self.fn + other.fn)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def degenerate(self) -> List[str]:
        """Names of metrics whose ratio is 0/0 for these counts."""
        flags = []
        if self.tp + self.fn == 0:
            flags.append("recall")
        if self.tp + self.fp == 0:
            flags.append("precision")
        r, p, _ = f1(self)
        if r + p == 0:
            flags.append("f1")
        return flags


def confusion(truth_on, pred_on) -> ConfusionCounts:
    truth_on = np.asarray(truth_on, dtype=bool)
    pred_on = np.asarray(pred_on, dtype=bool)
    if truth_on.shape != pred_on.shape:
        raise ValueError(f"length mismatch: {truth_on.shape} vs {pred_on.shape}")
    tp = int(np.count_nonzero(truth_on & pred_on))
    fp = int(np.count_nonzero(~truth_on & pred_on))
    fn = int(np.count_nonzero(truth_on & ~pred_on))
    return ConfusionCounts(tp, fp, truth_on.size - tp - fp - fn, fn)


class Scores(NamedTuple):
    recall: float
    precision: float
    f1: float


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


def f1(c: ConfusionCounts) -> Scores:
    """Recall, precision and F1; any 0/0 is reported as 0."""
    recall = _ratio(c.tp, c.tp + c.fn)
    precision = _ratio(c.tp, c.tp + c.fp)
    return Scores(recall, precision, _ratio(2 * precision * recall, precision + recall))


def mae(truth, pred) -> float:
    truth = np.asarray(truth, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    if truth.shape != pred.shape:
        raise ValueError(f"length mismatch: {truth.shape} vs {pred.shape}")
    if truth.size == 0:
        raise ValueError("mae of an empty sequence")
    return float(np.abs(truth - pred).sum() / truth.size)


@dataclass
class EvalReport:
    appliance: str
    recall: float
    precision: float
    f1: float
    mae: float
    counts: ConfusionCounts
    n_pairs: int
    n_points: int
    abs_error_total: float
    mae_normalized: Optional[float] = None
    degenerate: List[str] = field(default_factory=list)
    config_digest: str = ""
    seed: Optional[int] = None

    FIELDS = ("appliance", "recall", "precision", "f1", "mae_w", "mae_normalized", "tp", "fp", "tn", "fn",
              "n_pairs", "n_points", "degenerate", "config_digest", "seed")

    def row(self) -> list:
        c = self.counts
        return [self.appliance, repr(self.recall), repr(self.precision), repr(self.f1), repr(self.mae),
                "" if self.mae_normalized is None else repr(self.mae_normalized),
                c.tp, c.fp, c.tn, c.fn, self.n_pairs, self.n_points, ";".join(self.degenerate),
                self.config_digest, "" if self.seed is None else self.seed]

    def table(self) -> str:
        lines = [
            f"appliance   {self.appliance}",
            f"pairs       {self.n_pairs} ({self.n_points} points)",
            f"recall      {self.recall:.4f}",
            f"precision   {self.precision:.4f}",
            f"F1          {self.f1:.4f}",
            f"MAE         {self.mae:.2f} W",
            f"TP/FP/TN/FN {self.counts.tp}/{self.counts.fp}/{self.counts.tn}/{self.counts.fn}",
        ]
        if self.mae_normalized is not None:
            lines.append(f"MAE/max     {self.mae_normalized:.4f}")
        if self.degenerate:
            lines.append(f"degenerate  {', '.join(self.degenerate)} (0/0 reported as 0)")
        return "\n".join(lines)


def write_reports(path, reports: Sequence[EvalReport]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(EvalReport.FIELDS)
        for r in reports:
            w.writerow(r.row())


def predict(model, x: np.ndarray, batch_size: int = 64) -> np.ndarray:
    """Run ``model`` in eval mode on (N, T) windows; returns (N, T) in [0, 1]."""
    if hasattr(model, "eval"):
        model.eval()
    config = getattr(model, "config", None)
    dtype = config.dtype if config is not None else np.asarray(x).dtype
    out = []
    for lo in range(0, len(x), batch_size):
        xb = Tensor(np.asarray(x[lo : lo + batch_size, None, :], dtype=dtype))
        out.append(model(xb).data[:, 0, :])
    return np.concatenate(out).astype(np.float64)


def evaluate(model, pairs: Sequence[SamplePair], spec: ActivationSpec, appliance: str = "",
             max_power: Optional[float] = None, dump_path=None, batch_size: int = 64,
             config_digest: str = "", seed: Optional[int] = None) -> EvalReport:
    """Pool on/off counts and absolute errors over every point of every pair.

    Predictions and labels are converted back to watts with each pair's
    scale, then thresholded at ``spec.on_power_threshold``.
    """
    if not pairs:
        raise ValueError("no test pairs to evaluate")
    x = np.stack([np.asarray(p.aggregate) for p in pairs])
    preds = predict(model, x, batch_size)
    counts = ConfusionCounts()
    err_totals = []
    n_points = 0
    dump_rows = [] if dump_path is not None else None
    for i, (pair, pred) in enumerate(zip(pairs, preds)):
        truth_w = denormalize(pair.appliance, pair.scale)
        pred_w = denormalize(pred, pair.scale)
        counts = counts + confusion(classify_on_off(truth_w, spec.on_power_threshold),
                                    classify_on_off(pred_w, spec.on_power_threshold))
        err_totals.append(float(np.abs(truth_w - pred_w).sum()))
        n_points += truth_w.size
        if dump_rows is not None:
            dump_rows.extend((i, t, truth_w[t], pred_w[t]) for t in range(truth_w.size))
    abs_total = math.fsum(err_totals)
    scores = f1(counts)
    mae_w = abs_total / n_points
    if dump_rows is not None:
        Path(dump_path).parent.mkdir(parents=True, exist_ok=True)
        with open(dump_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["pair", "index", "truth_w", "pred_w"])
            for i, t, a, b in dump_rows:
                w.writerow([i, t, repr(float(a)), repr(float(b))])
    return EvalReport(
        appliance=appliance, recall=scores.recall, precision=scores.precision, f1=scores.f1, mae=mae_w,
        counts=counts, n_pairs=len(pairs), n_points=n_points, abs_error_total=abs_total,
        mae_normalized=None if max_power is None else mae_w / max_power,
        degenerate=counts.degenerate(), config_digest=config_digest, seed=seed,
    )
