import json
import struct

import numpy as np
import pytest
from helpers import TOY_G, TOY_P

from g2p_attn.checkpoint import FORMAT_VERSION, MAGIC, load_checkpoint, read_checkpoint, save_checkpoint
from g2p_attn.errors import CheckpointError
from g2p_attn.model import G2PModel, ModelConfig
from g2p_attn.train import Adam


@pytest.fixture
def model():
    return G2PModel(ModelConfig(attention="local_p", layers=2, units=5, embed_dim=3, seed=4), TOY_G, TOY_P)


def test_round_trip_is_bit_exact(tmp_path, model):
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, model, {"epoch": 3, "dev_wer": 12.5, "lr": 0.0008})
    loaded, meta = load_checkpoint(path)
    assert meta == {"epoch": 3, "dev_wer": 12.5, "lr": 0.0008}
    assert loaded.config == model.config
    assert loaded.g_vocab == model.g_vocab and loaded.p_vocab == model.p_vocab
    assert list(loaded.params) == list(model.params)
    for k, v in model.params.items():
        assert loaded.params[k].data.dtype == np.float32
        assert loaded.params[k].data.tobytes() == v.data.tobytes()


def test_layout(tmp_path, model):
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, model)
    raw = path.read_bytes()
    assert raw[:8] == MAGIC
    version, n = struct.unpack_from("<IQ", raw, 8)
    assert version == FORMAT_VERSION
    header = json.loads(raw[20:20 + n])
    assert header["gate_order"] == ["input", "forget", "candidate", "output"]
    payload = len(raw) - 20 - n
    assert payload == 4 * sum(p.size for p in model.params.values())
    first = header["tensors"][0]
    expected = model.params[first["name"]].data.reshape(-1)
    np.testing.assert_array_equal(np.frombuffer(raw, "<f4", count=expected.size, offset=20 + n), expected)


def test_optimizer_state_round_trip(tmp_path, model):
    opt = Adam()
    for p in model.params.values():
        p.grad = np.ones_like(p.data)
    opt.step(model.params, 0.01)
    save_checkpoint(tmp_path / "s.ckpt", model, {"x": 1}, opt)
    _, _, restored = load_checkpoint(tmp_path / "s.ckpt", with_optimizer=True)
    assert restored.t == 1
    for k in model.params:
        np.testing.assert_array_equal(restored.m[k], opt.m[k])
        np.testing.assert_array_equal(restored.v[k], opt.v[k])
    save_checkpoint(tmp_path / "plain.ckpt", model)
    assert load_checkpoint(tmp_path / "plain.ckpt", with_optimizer=True)[2] is None


def test_rejects_foreign_and_future_files(tmp_path, model):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"not a checkpoint at all")
    with pytest.raises(CheckpointError):
        read_checkpoint(bad)
    save_checkpoint(tmp_path / "m.ckpt", model)
    raw = bytearray((tmp_path / "m.ckpt").read_bytes())
    raw[8:12] = struct.pack("<I", FORMAT_VERSION + 1)
    bad.write_bytes(bytes(raw))
    with pytest.raises(CheckpointError, match="version"):
        read_checkpoint(bad)


def test_save_is_atomic(tmp_path, model):
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, model)
    assert not (tmp_path / "m.ckpt.tmp").exists()
