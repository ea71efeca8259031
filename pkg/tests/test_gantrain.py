import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import pfgan.gantrain.trainer as trainer_mod
from pfgan.diffmath import AdamState, ParamStore
from pfgan.errors import (BadMagic, ConfigError, InputError, NumericFailure, StorageError,
                          Truncated, VersionMismatch)
from pfgan.gantrain import (GateState, TrainConfig, Trainer, decode_checkpoint, disc_loss,
                            encode_checkpoint, gen_loss, load_checkpoint, pretrain,
                            reconstruction_loss, save_checkpoint, train_gan, update_gates)
from pfgan.gantrain.metrics import HEADER
from pfgan.generator import Generator
from pfgan.synthtask import CorpusConfig, make_split

CORPUS = make_split(CorpusConfig(vocab_size=6, frame_dim=4, d_min=1, d_max=2, l_min=2,
                                 l_max=4, seed=3), "train", 12)


def tiny(mode="tf-gan", **kw):
    base = dict(mode=mode, pretrain_steps=4, gan_steps=4, probe_period=2, probe_batches=1,
                batch_size=3, disc_hidden=4, seed=9)
    base.update(kw)
    return TrainConfig(**base)


@pytest.fixture
def gen(tiny_gen_config):
    return Generator(tiny_gen_config, seed=11)


# -- closed-form losses ------------------------------------------------------

def test_reconstruction_loss_examples():
    t = np.random.default_rng(0).normal(size=(3, 2))
    assert float(reconstruction_loss(t, t).value) == 0.0
    assert float(reconstruction_loss(t + 0.1, t).value) == pytest.approx(0.01, abs=1e-12)
    assert float(reconstruction_loss([[0.0, 1.0]], [[1.0, 1.0]]).value) == 0.5
    with pytest.raises(InputError):
        reconstruction_loss(np.zeros((2, 2)), np.zeros((2, 3)))


@pytest.mark.parametrize("st_, sf, expect", [(1, -1, 0.0), (0, 0, 2.0), (0.5, -2, 0.5)])
def test_hinge_examples(st_, sf, expect):
    assert abs(float(disc_loss([st_], [sf]).value) - expect) <= 1e-12


def test_generator_loss_examples():
    assert float(gen_loss(0.5, [0.8], [0.2], 1e-3).value) == pytest.approx(0.5006, abs=1e-12)
    assert float(gen_loss(0.5, [0.3], [0.9], 0.0).value) == 0.5
    assert float(gen_loss(0.5, [0.4], [0.4], 1e-3).value) == 0.5
    with pytest.raises(InputError):
        gen_loss(0.5, [0.0], [0.0], -1.0)


@given(st.floats(-5, 5), st.floats(-5, 5))
def test_hinge_is_nonnegative_and_zero_only_past_margins(a, b):
    v = float(disc_loss([a], [b]).value)
    assert v >= 0
    assert (v == 0) == (a >= 1 and b <= -1)


@given(st.floats(0, 3), st.lists(st.floats(-4, 4), min_size=1, max_size=5),
       st.lists(st.floats(-4, 4), min_size=1, max_size=5))
def test_generator_loss_is_affine_in_alpha(l_t, s_t, s_f):
    vals = [float(gen_loss(l_t, s_t, s_f, a).value) for a in (0.0, 1e-3, 2e-3)]
    slope = -(np.mean(s_f) - np.mean(s_t))
    assert vals[0] == l_t
    assert abs(vals[1] - (l_t + 1e-3 * slope)) <= 1e-12
    assert abs(vals[2] - (l_t + 2e-3 * slope)) <= 1e-12


@pytest.mark.parametrize("acc, gates", [(0.70, (False, True)), (0.75, (False, True)),
                                        (0.80, (True, True)), (0.97, (True, False)),
                                        (0.98, (True, False))])
def test_gate_truth_table(acc, gates):
    assert update_gates(acc, 0.75, 0.97) == GateState(*gates)


def test_gates_start_closed_for_generator():
    assert GateState() == GateState(s_g=False, s_d=True)
    with pytest.raises(InputError):
        update_gates(1.5, 0.75, 0.97)


def test_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(mode="gan")
    with pytest.raises(ConfigError):
        TrainConfig(r_low=0.9, r_high=0.8)
    with pytest.raises(ConfigError):
        TrainConfig(probe_period=0)
    with pytest.raises(ConfigError):
        TrainConfig(alpha=-1e-3)


# -- training loop -------------------------------------------------------------

def test_pretraining_without_steps_keeps_initialization(gen, tmp_path):
    init = gen.params.state()
    path = tmp_path / "p.ckpt"
    pretrain(tiny(pretrain_steps=0), gen, CORPUS, checkpoint_path=path)
    saved = load_checkpoint(path).tensors
    assert saved.keys() == init.keys()
    for k in init:
        assert saved[k].tobytes() == init[k].tobytes()


def test_pretraining_reduces_reconstruction_loss(gen):
    t = pretrain(tiny(pretrain_steps=60, lr_g=1e-2, lr_final=1e-3), gen, CORPUS)
    first = np.mean([r.L_T for r in t.reports[:5]])
    last = np.mean([r.L_T for r in t.reports[-5:]])
    assert last < first


def test_teacher_forced_mode_never_builds_a_discriminator(gen, monkeypatch):
    def boom(*a, **k):
        raise AssertionError("discriminator constructed")
    monkeypatch.setattr(trainer_mod, "Discriminator", boom)
    t = train_gan(tiny("tf"), gen, CORPUS)
    assert t.disc is None
    assert all(r.L_D is None and r.L_G is None for r in t.reports)


def test_low_accuracy_keeps_generator_on_reconstruction_only(tiny_gen_config):
    ref = Generator(tiny_gen_config, seed=11)
    train_gan(tiny("tf"), ref, CORPUS)
    gen = Generator(tiny_gen_config, seed=11)
    t = train_gan(tiny("tf-gan", alpha=0.5), gen, CORPUS, accuracy_probe=lambda i: 0.5)
    assert not any(r.s_g for r in t.reports)
    for name in gen.params.names():
        assert gen.params[name].value.tobytes() == ref.params[name].value.tobytes()


def test_high_accuracy_freezes_the_discriminator(gen):
    t = Trainer(tiny(gan_steps=6), gen, CORPUS, accuracy_probe=lambda i: 0.99)
    t.step(0)
    frozen = t.disc.params.state()
    for i in range(1, 6):
        r = t.step(i)
        assert r.s_d is False and r.L_D is None
    for k, v in t.disc.params.state().items():
        assert v.tobytes() == frozen[k].tobytes(), k


def test_closed_generator_gate_equals_zero_alpha(gen):
    t = Trainer(tiny(alpha=0.7), gen, CORPUS)
    t.generator_grads(2, s_g=False)
    closed = {p.name: p.grad.copy() for p in gen.params.trainable()}
    t.generator_grads(2, s_g=True, alpha=0.0)
    zero = {p.name: p.grad.copy() for p in gen.params.trainable()}
    t.generator_grads(2, s_g=True)
    open_ = {p.name: p.grad.copy() for p in gen.params.trainable()}
    for k in closed:
        np.testing.assert_array_equal(closed[k], zero[k], err_msg=k)
    assert any(not np.array_equal(closed[k], open_[k]) for k in closed)
    assert all((p.grad == 0).all() for p in t.disc.params.trainable())


def test_gates_follow_probes(gen):
    seq = iter([0.8, 0.99, 0.5])
    t = Trainer(tiny(gan_steps=6), gen, CORPUS, accuracy_probe=lambda i: next(seq))
    reports = [t.step(i) for i in range(6)]
    assert [(r.s_g, r.s_d) for r in reports] == [
        (False, True), (True, True), (True, True), (True, False), (True, False), (False, True)]
    assert [r.accuracy for r in reports] == [0.8, None, 0.99, None, 0.5, None]


def test_real_probe_and_losses_are_sane(gen):
    t = train_gan(tiny(gan_steps=3), gen, CORPUS)
    for r in t.reports:
        assert r.L_D >= 0 and r.L_T >= 0
    assert 0.0 <= t.reports[0].accuracy <= 1.0


@pytest.mark.parametrize("mode", ["tf-gan", "ss-gan"])
def test_metrics_csv_is_deterministic(tiny_gen_config, tmp_path, mode):
    blobs = []
    for k in range(2):
        path = tmp_path / f"m{k}.csv"
        train_gan(tiny(mode), Generator(tiny_gen_config, seed=11), CORPUS, metrics_path=path)
        blobs.append(path.read_bytes())
    assert blobs[0] == blobs[1]
    lines = blobs[0].decode().splitlines()
    assert lines[0] == ",".join(HEADER)
    assert len(lines) == 5


def test_numeric_failure_keeps_a_checkpoint(gen, tmp_path):
    gen.params["gen.proj.w"].value[0, 0] = np.nan
    path = tmp_path / "fail.ckpt"
    with pytest.raises(NumericFailure):
        pretrain(tiny(), gen, CORPUS, checkpoint_path=path)
    assert path.exists()


def test_corpus_frame_dim_must_match(tiny_gen_config):
    other = make_split(CorpusConfig(vocab_size=6, frame_dim=5, seed=0), "train", 4)
    with pytest.raises(ConfigError):
        Trainer(tiny(), Generator(tiny_gen_config, seed=0), other)


# -- checkpoints -----------------------------------------------------------------

def _random_store(seed):
    rng = np.random.default_rng(seed)
    ps = ParamStore()
    ps.add("a.w", rng.normal(size=(3, 4)))
    ps.add("a.b", rng.normal(size=4))
    ps.add("scalar", np.asarray(rng.normal()))
    ps.add("buf", rng.normal(size=(2, 1, 2)), trainable=False)
    return ps


def test_checkpoint_round_trip_is_bitwise(tmp_path):
    ps = _random_store(0)
    opt = AdamState.for_params(ps)
    opt.step = 7
    for k in opt.m:
        opt.m[k] += 0.25
        opt.v[k] += np.pi
    path = tmp_path / "x.ckpt"
    save_checkpoint(ps, {"gen": opt}, path)
    ck = load_checkpoint(path)
    state = ps.state()
    assert list(ck.tensors) == list(state)
    for k, v in state.items():
        assert ck.tensors[k].shape == v.shape and ck.tensors[k].tobytes() == v.tobytes()
    back = ck.optimizers["gen"]
    assert back.step == 7 and (back.beta1, back.beta2, back.eps) == (opt.beta1, opt.beta2, opt.eps)
    for k in opt.m:
        assert back.m[k].tobytes() == opt.m[k].tobytes()
        assert back.v[k].tobytes() == opt.v[k].tobytes()
    assert encode_checkpoint(ck.tensors, ck.optimizers) == path.read_bytes()


@given(st.integers(0, 2**31))
def test_checkpoint_round_trip_property(seed):
    ps = _random_store(seed)
    ck = decode_checkpoint(encode_checkpoint(ps.state()))
    assert ck.optimizers is None
    for k, v in ps.state().items():
        assert ck.tensors[k].tobytes() == v.tobytes()


def test_corrupted_checkpoints_raise_distinct_errors():
    data = encode_checkpoint(_random_store(1).state())
    with pytest.raises(BadMagic):
        decode_checkpoint(b"X" + data[1:])
    with pytest.raises(VersionMismatch):
        decode_checkpoint(data[:4] + struct.pack("<I", 2) + data[8:])
    # header 12 bytes, then "a.w": 2 + 3 name bytes, rank, 2 dims, 12 float64
    with pytest.raises(Truncated, match="'a.w'"):
        decode_checkpoint(data[:12 + 2 + 3 + 1 + 8 + 40])
    with pytest.raises(Truncated, match="'a.b'"):
        decode_checkpoint(data[:12 + 2 + 3 + 1 + 8 + 96 + 2 + 3 + 1 + 4 + 8])
    with pytest.raises(StorageError):
        decode_checkpoint(data + b"\0")
    for err in (BadMagic, VersionMismatch, Truncated):
        assert issubclass(err, StorageError)


def test_missing_checkpoint_is_a_storage_error(tmp_path):
    with pytest.raises(StorageError):
        load_checkpoint(tmp_path / "absent.ckpt")
