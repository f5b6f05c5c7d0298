"""Appliance activation extraction."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import List

from msnilm import kernels
from msnilm.data.series import PowerSeries


@dataclass(frozen=True)
class ActivationSpec:
    """Thresholds that decide when an appliance counts as "on".

    Durations are in seconds and compare against ``points * period`` with ``>=``.
    """

    on_power_threshold: float
    min_on_duration: float
    min_off_duration: float

    def __post_init__(self):
        for name, v in asdict(self).items():
            if v < 0:
                raise ValueError(f"{name} must be non-negative, got {v}")


@dataclass(frozen=True)
class Activation:
    start: int
    end: int

    def __post_init__(self):
        if self.end <= self.start:
            raise ValueError(f"activation end {self.end} must exceed start {self.start}")

    def __len__(self) -> int:
        return self.end - self.start


# On-power threshold (W), minimum on duration (s), minimum off duration (s).
UKDALE_SPECS = {
    "kettle": ActivationSpec(2000, 12, 0),
    "microwave": ActivationSpec(200, 12, 30),
    "fridge": ActivationSpec(50, 60, 12),
    "dish washer": ActivationSpec(10, 1800, 1800),
    "washing machine": ActivationSpec(20, 1800, 160),
}

# Window length in points at 6 s.
UKDALE_WINDOWS = {
    "kettle": 64,
    "microwave": 128,
    "fridge": 512,
    "dish washer": 1024,
    "washing machine": 1024,
}


def get_activations(s: PowerSeries, spec: ActivationSpec) -> List[Activation]:
    """Find the "on" periods of an appliance series.

    Runs with power at or above the threshold are merged when the gap between
    them lasts less than ``min_off_duration``; merged runs shorter than
    ``min_on_duration`` are dropped. Gap samples count as off.
    """
    above = (s.values >= spec.on_power_threshold) & ~s.gap
    starts, ends = kernels.activation_runs(above, s.period, spec.min_on_duration, spec.min_off_duration)
    return [Activation(int(a), int(b)) for a, b in zip(starts, ends)]
