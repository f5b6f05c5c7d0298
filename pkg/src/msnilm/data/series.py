"""Power time series: CSV ingestion and 6-second resampling."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

PERIOD = 6.0
MAX_FILL_GAP = 180.0


class DataError(ValueError):
    """Malformed or unusable input data."""


@dataclass
class PowerSeries:
    """Uniformly sampled power readings in watts.

    ``gap`` marks samples with no underlying measurement; windows that
    overlap a gap are rejected by the samplers.
    """

    start_time: float
    period: float
    values: np.ndarray
    gap: Optional[np.ndarray] = None
    timestamps: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.gap is None:
            self.gap = np.zeros(len(self.values), dtype=bool)
        self.gap = np.asarray(self.gap, dtype=bool)
        if self.period <= 0:
            raise DataError(f"period must be positive, got {self.period}")
        if len(self.gap) != len(self.values):
            raise DataError("gap mask length differs from values length")
        if not np.all(np.isfinite(self.values)):
            raise DataError("power values must be finite")

    def __len__(self) -> int:
        return len(self.values)

    @property
    def times(self) -> np.ndarray:
        if self.timestamps is not None:
            return self.timestamps
        return self.start_time + self.period * np.arange(len(self.values))


def ingest_csv(path, timestamp_col: int = 0, value_col: int = 1, delimiter: str = ",") -> PowerSeries:
    """Read ``timestamp, watts`` rows at their native rate.

    A non-numeric first row is treated as a header. Timestamps must not
    decrease; repeated timestamps keep the last reading.
    """
    path = Path(path)
    ts, vals = [], []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh, delimiter=delimiter), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                t = float(row[timestamp_col])
                v = float(row[value_col])
            except (ValueError, IndexError):
                if lineno == 1 and not ts:
                    continue
                raise DataError(f"{path}:{lineno}: malformed row {row!r}") from None
            if not (np.isfinite(t) and np.isfinite(v)):
                raise DataError(f"{path}:{lineno}: non-finite value in row {row!r}")
            if ts and t < ts[-1]:
                raise DataError(f"{path}:{lineno}: timestamp {t} decreases (previous {ts[-1]})")
            if ts and t == ts[-1]:
                vals[-1] = v
                continue
            ts.append(t)
            vals.append(v)
    if not ts:
        raise DataError(f"{path}: no data rows")
    ts = np.asarray(ts)
    period = float(np.median(np.diff(ts))) if len(ts) > 1 else PERIOD
    return PowerSeries(ts[0], period, np.asarray(vals), timestamps=ts)


def resample_6s(s: PowerSeries, period: float = PERIOD, max_fill_gap: float = MAX_FILL_GAP) -> PowerSeries:
    """Average readings into ``period``-second buckets aligned to multiples of ``period``.

    Runs of empty buckets lasting at most ``max_fill_gap`` seconds are
    forward-filled; longer runs stay zero and are flagged in ``gap``.
    """
    if s.timestamps is None and s.period == period:
        return s
    if s.period > period + 1e-9:
        raise DataError(f"cannot upsample a {s.period:g} s series to {period:g} s")
    t = s.times
    origin = np.floor(t[0] / period) * period
    idx = np.floor((t - origin) / period + 1e-9).astype(np.int64)
    n = int(idx[-1]) + 1
    sums = np.bincount(idx, weights=s.values, minlength=n)
    counts = np.bincount(idx, minlength=n)
    empty = counts == 0
    values = np.zeros(n)
    values[~empty] = sums[~empty] / counts[~empty]

    gap = np.zeros(n, dtype=bool)
    if empty.any():
        edges = np.diff(np.concatenate(([0], empty.view(np.int8), [0])))
        for lo, hi in zip(np.flatnonzero(edges == 1), np.flatnonzero(edges == -1)):
            if (hi - lo) * period <= max_fill_gap and lo > 0:
                values[lo:hi] = values[lo - 1]
            else:
                gap[lo:hi] = True
    return PowerSeries(float(origin), period, values, gap)


def align(a: PowerSeries, b: PowerSeries):
    """Crop two series on the same grid to their common time span."""
    if a.period != b.period:
        raise DataError(f"series periods differ: {a.period} vs {b.period}")
    start = max(a.start_time, b.start_time)
    end = min(a.start_time + a.period * len(a), b.start_time + b.period * len(b))
    if end <= start:
        raise DataError("series do not overlap in time")

    def crop(s):
        lo = int(round((start - s.start_time) / s.period))
        hi = int(round((end - s.start_time) / s.period))
        return PowerSeries(start, s.period, s.values[lo:hi], s.gap[lo:hi])

    return crop(a), crop(b)
