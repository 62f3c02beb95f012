import numpy as np
import pytest

from singlem.autodiff import Parameter, Tensor
from singlem.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from singlem.errors import CheckpointIntegrity, IoFailure
from singlem.optim import AdamWState


def sample_checkpoint(seed=0):
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in (("layer.w", (3, 4)), ("layer.b", (4,)), ("scalar", ())):
        params[name] = Parameter(name, Tensor(rng.normal(size=shape),
                                              requires_grad=True))
    params["frozen"] = Parameter("frozen", Tensor(rng.normal(size=2)),
                                 trainable=False)
    state = AdamWState(
        m={n: rng.normal(size=p.tensor.shape) for n, p in params.items()},
        v={n: np.abs(rng.normal(size=p.tensor.shape)) for n, p in params.items()},
        step=17)
    return Checkpoint(params=params, config={"token_len": "128", "seed": "5"},
                      opt_state=state)


def test_round_trip_bit_exact(tmp_path):
    ckpt = sample_checkpoint()
    save_checkpoint(ckpt, tmp_path / "model")
    back = load_checkpoint(tmp_path / "model")
    assert set(back.params) == set(ckpt.params)
    for name, p in ckpt.params.items():
        q = back.params[name]
        assert p.tensor.data.tobytes() == q.tensor.data.tobytes()
        assert p.tensor.shape == q.tensor.shape
        assert p.trainable == q.trainable
        assert q.tensor.requires_grad == p.trainable
    assert back.config == ckpt.config
    assert back.opt_state.step == 17
    for n in ckpt.opt_state.m:
        assert np.array_equal(back.opt_state.m[n], ckpt.opt_state.m[n])
        assert np.array_equal(back.opt_state.v[n], ckpt.opt_state.v[n])


def test_payload_corruption_detected(tmp_path):
    save_checkpoint(sample_checkpoint(), tmp_path / "model")
    payload = bytearray((tmp_path / "model.ckpb").read_bytes())
    payload[10] ^= 0xFF
    (tmp_path / "model.ckpb").write_bytes(bytes(payload))
    with pytest.raises(CheckpointIntegrity):
        load_checkpoint(tmp_path / "model")


def test_missing_pair_raises(tmp_path):
    with pytest.raises(IoFailure):
        load_checkpoint(tmp_path / "absent")


def test_resave_is_byte_identical(tmp_path):
    ckpt = sample_checkpoint(3)
    save_checkpoint(ckpt, tmp_path / "a")
    save_checkpoint(ckpt, tmp_path / "b")
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()
    assert (tmp_path / "a.ckpb").read_bytes() == (tmp_path / "b.ckpb").read_bytes()


def test_checkpoint_without_optimizer(tmp_path):
    ckpt = sample_checkpoint()
    ckpt.opt_state = None
    save_checkpoint(ckpt, tmp_path / "bare")
    back = load_checkpoint(tmp_path / "bare")
    assert back.opt_state is None
    assert set(back.params) == set(ckpt.params)
