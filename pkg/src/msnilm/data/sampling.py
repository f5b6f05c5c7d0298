"""Window sampling, per-pair normalisation and training-pair filtering."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from msnilm.data.activations import Activation
from msnilm.data.series import PowerSeries

# provenance bits stored with every pair
FLAG_POSITIVE = 1
FLAG_TRAIN = 2
FLAG_FILTER_CHECKED = 4


@dataclass
class SamplePair:
    """Aligned aggregate and appliance windows.

    After :func:`normalize_pair` both windows are divided by ``scale``, the
    peak of the raw aggregate window.
    """

    aggregate: np.ndarray
    appliance: np.ndarray
    scale: float = 1.0
    start: int = 0
    act_len: int = 0
    flags: int = 0
    normalized: bool = False

    def __post_init__(self):
        if len(self.aggregate) != len(self.appliance):
            raise ValueError("aggregate and appliance windows differ in length")

    @property
    def window_length(self) -> int:
        return len(self.aggregate)

    @property
    def positive(self) -> bool:
        return bool(self.flags & FLAG_POSITIVE)

    @property
    def train(self) -> bool:
        return bool(self.flags & FLAG_TRAIN)

    @property
    def filter_checked(self) -> bool:
        return bool(self.flags & FLAG_FILTER_CHECKED)


def _window_clean(gap: Optional[np.ndarray], lo: int, hi: int) -> bool:
    return gap is None or not gap[lo:hi].any()


def legal_offsets(n: int, act: Activation, window_length: int, gap: Optional[np.ndarray] = None) -> np.ndarray:
    """Every window start that keeps the whole activation inside the window and the series."""
    lo = max(act.end - window_length, 0)
    hi = min(act.start, n - window_length)
    if hi < lo:
        return np.zeros(0, dtype=np.int64)
    offsets = np.arange(lo, hi + 1)
    if gap is not None and gap.any():
        # prefix sums give the gap count inside each candidate window
        csum = np.concatenate(([0], np.cumsum(gap)))
        offsets = offsets[csum[offsets + window_length] - csum[offsets] == 0]
    return offsets


def sample_positive(aggregate: PowerSeries, appliance: PowerSeries, act: Activation,
                    window_length: int, rng: np.random.Generator, normalize: bool = True) -> Optional[SamplePair]:
    """Place a window uniformly at random so it contains the whole activation.

    Returns ``None`` when no placement exists (activation longer than the
    window, series too short, or every placement overlaps a gap) or when the
    aggregate window is all zero.
    """
    if len(act) > window_length:
        return None
    gap = aggregate.gap | appliance.gap
    offsets = legal_offsets(len(aggregate), act, window_length, gap)
    if offsets.size == 0:
        return None
    o = int(offsets[rng.integers(offsets.size)])
    pair = SamplePair(
        aggregate.values[o : o + window_length].copy(),
        appliance.values[o : o + window_length].copy(),
        start=o, act_len=len(act), flags=FLAG_POSITIVE,
    )
    return normalize_pair(pair) if normalize else pair


def sample_negative(aggregate: PowerSeries, appliance: PowerSeries, act: Activation,
                    window_length: int, normalize: bool = True) -> Optional[SamplePair]:
    """The window that ends where the activation starts: ``[start - L, start)``."""
    lo, hi = act.start - window_length, act.start
    if lo < 0 or hi > len(aggregate):
        return None
    if not _window_clean(aggregate.gap | appliance.gap, lo, hi):
        return None
    pair = SamplePair(aggregate.values[lo:hi].copy(), appliance.values[lo:hi].copy(), start=lo)
    return normalize_pair(pair) if normalize else pair


def normalize_pair(pair: SamplePair) -> Optional[SamplePair]:
    """Divide both windows by the aggregate peak; ``None`` for an all-zero aggregate."""
    peak = float(np.max(pair.aggregate))
    if not peak > 0:
        return None
    return replace(
        pair,
        aggregate=pair.aggregate / peak,
        appliance=pair.appliance / peak,
        scale=pair.scale * peak,
        normalized=True,
    )


def denormalize_pair(pair: SamplePair):
    """Recover ``(aggregate_watts, appliance_watts)``."""
    return pair.aggregate * pair.scale, pair.appliance * pair.scale


def dominated_points(pair: SamplePair, factor: float = 3.0) -> int:
    return int(np.count_nonzero(pair.aggregate > factor * pair.appliance))


def filter_training_pair(pair: SamplePair, act_len: Optional[int] = None) -> bool:
    """Return ``True`` to keep a candidate training pair.

    A pair is discarded when the activation covers less than a third of
    the window, or when the aggregate exceeds three times the appliance
    power at more than half of the points.
    """
    L = pair.window_length
    n = pair.act_len if act_len is None else act_len
    if n < L / 3:
        return False
    return dominated_points(pair) <= L / 2
