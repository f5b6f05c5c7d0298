import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def write_manifest(directory, length=20_000, epochs=1, model=None, train=None, seed=7):
    """Synthetic two-house manifest with relative data paths; returns its path."""
    import yaml

    directory = Path(directory)
    houses = {}
    for h in ("train", "test"):
        houses[f"synth_{h}"] = {
            "aggregate": f"data/{h}/aggregate.csv",
            "appliances": {"kettle": f"data/{h}/kettle.csv", "cycler": f"data/{h}/cycler.csv"},
        }
    doc = {
        "seed": seed,
        "output_dir": "out",
        "targets": ["kettle"],
        "appliances": {"kettle": {"on_power_threshold": 1000, "min_on_duration": 12,
                                  "min_off_duration": 0, "window_length": 64, "max_power": 2000}},
        "houses": houses,
        "split": {"train": ["synth_train"], "test": ["synth_test"]},
        "synthetic": {
            "length": length,
            "noise_sigma": 30,
            "houses": {"synth_train": 0, "synth_test": 1},
            "appliances": [
                {"name": "kettle", "amplitude": 2000, "on_points": [36, 60], "off_points": [120, 400]},
                {"name": "cycler", "amplitude": 100, "on_points": [10, 30], "off_points": [10, 40]},
            ],
        },
        "model": model or {"kind": "multiscale", "channels": 4, "head_hidden": 4, "blocks_per_body": [1, 2]},
        "train": {"batch_size": 16, "epochs": epochs, "patience": 0, **(train or {})},
    }
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / "manifest.yaml"
    path.write_text(yaml.safe_dump(doc, sort_keys=False))
    return path


@pytest.fixture
def manifest_factory(tmp_path):
    def make(sub="exp", **kw):
        return write_manifest(tmp_path / sub, **kw)

    return make


# -- acceptance reporting ------------------------------------------------
_CRITERIA = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when not in ("setup", "call"):
        return
    number, title = marker.args
    if report.when == "setup" and report.passed:
        return
    _CRITERIA[number] = (title, "PASS" if report.passed else "FAIL", report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, status, secs = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number}: {status}  {title}  ({secs:.1f} s)")
