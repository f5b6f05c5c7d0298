from msnilm.data.activations import (
    UKDALE_SPECS,
    UKDALE_WINDOWS,
    Activation,
    ActivationSpec,
    get_activations,
)
from msnilm.data.sampling import (
    SamplePair,
    denormalize_pair,
    filter_training_pair,
    normalize_pair,
    sample_negative,
    sample_positive,
)
from msnilm.data.series import DataError, PowerSeries, align, ingest_csv, resample_6s
from msnilm.data.shards import pairs_to_arrays, read_shard, write_shard
from msnilm.data.synth import ApplianceTemplate, Scenario, synth_generate

__all__ = [
    "Activation",
    "ActivationSpec",
    "ApplianceTemplate",
    "DataError",
    "PowerSeries",
    "SamplePair",
    "Scenario",
    "UKDALE_SPECS",
    "UKDALE_WINDOWS",
    "align",
    "denormalize_pair",
    "filter_training_pair",
    "get_activations",
    "ingest_csv",
    "normalize_pair",
    "pairs_to_arrays",
    "read_shard",
    "resample_6s",
    "sample_negative",
    "sample_positive",
    "synth_generate",
    "write_shard",
]
