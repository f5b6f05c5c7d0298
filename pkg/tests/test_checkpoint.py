import pytest

from msnilm.checkpoint import (
    CheckpointError,
    config_digest,
    load_checkpoint,
    read_checkpoint,
    save_checkpoint,
)
from msnilm.model import ConvConfig, ModelConfig, build_model
from msnilm.tensor import Tensor


@pytest.mark.parametrize("cfg", [ConvConfig(), ModelConfig(channels=8, head_hidden=6, blocks_per_body=[1, 2])])
def test_round_trip_is_bit_identical(cfg, tmp_path, rng):
    model = build_model(cfg, seed=11)
    path = tmp_path / "m.bin"
    save_checkpoint(path, model, {"seed": 11})
    again, meta = load_checkpoint(path)
    assert meta == {"seed": 11}
    assert again.config == model.config
    for (n1, p1), (n2, p2) in zip(model.named_parameters(), again.named_parameters()):
        assert n1 == n2 and p1.dtype == p2.dtype
        assert p1.data.tobytes() == p2.data.tobytes()
    x = Tensor(rng.standard_normal((1, cfg.in_channels, 20)).astype(cfg.dtype))
    assert model.eval()(x).data.tobytes() == again.eval()(x).data.tobytes()


def test_header_layout(tmp_path):
    path = tmp_path / "c.bin"
    save_checkpoint(path, build_model(ConvConfig(), seed=0))
    blob = path.read_bytes()
    assert blob[:8] == b"MSNILMCK"
    assert int.from_bytes(blob[8:10], "little") == 1
    header, tensors = read_checkpoint(path)
    assert header["model"]["kind"] == "conv1d"
    assert tensors["conv.weight"].shape == (8, 1, 5)
    assert sum(e["nbytes"] for e in header["tensors"]) == 48 * 8


def test_save_is_deterministic(tmp_path):
    a, b = tmp_path / "a.bin", tmp_path / "b.bin"
    save_checkpoint(a, build_model(ConvConfig(), seed=1), {"x": 1})
    save_checkpoint(b, build_model(ConvConfig(), seed=1), {"x": 1})
    assert a.read_bytes() == b.read_bytes()


def test_bad_magic(tmp_path):
    p = tmp_path / "junk.bin"
    p.write_bytes(b"NOTACKPT" + bytes(10))
    with pytest.raises(CheckpointError, match="magic"):
        read_checkpoint(p)


def test_truncated_payload(tmp_path):
    p = tmp_path / "t.bin"
    save_checkpoint(p, build_model(ConvConfig(), seed=0))
    p.write_bytes(p.read_bytes()[:-8])
    with pytest.raises(CheckpointError):
        read_checkpoint(p)


def test_digest_is_order_insensitive_on_keys():
    assert config_digest({"a": 1, "b": 2}) == config_digest({"b": 2, "a": 1})
    assert config_digest({"a": 1}) != config_digest({"a": 2})
    assert len(config_digest({})) == 16
