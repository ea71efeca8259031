import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pfgan.diffmath import forward_backward, ops
from pfgan.errors import ConfigError, InputError
from pfgan.generator import (FREE_RUNNING, TEACHER_FORCING, Batch, DecodeMode, DropoutMasks,
                             Generator, GeneratorConfig, SsSchedule, make_batch, ss_probability)
from pfgan.synthtask import CorpusConfig, make_split


@pytest.fixture
def gen(tiny_gen_config):
    return Generator(tiny_gen_config, seed=5)


@pytest.fixture
def batch(tiny_gen_config):
    cfg = CorpusConfig(vocab_size=6, frame_dim=4, d_min=1, d_max=3, l_min=2, l_max=5, seed=1)
    return make_batch(make_split(cfg, "train", 3))


def masks_for(gen, batch, seed=0):
    c = gen.config
    return DropoutMasks.draw(np.random.default_rng(seed), batch.T, batch.size, c.prenet_dims,
                             c.prenet_dropout)


def test_encode_shapes_and_determinism():
    g = Generator(GeneratorConfig(), seed=0)
    assert g.encode([3]).shape == (1, 64)
    a, b = g.encode([1, 2, 3]).value, g.encode([1, 2, 3]).value
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, g.encode([2, 1, 3]).value)
    with pytest.raises(InputError):
        g.encode([12])
    with pytest.raises(InputError):
        g.encode([])


def test_single_key_attention_is_exactly_one(gen):
    res = gen.run([2], np.zeros((4, 4)), TEACHER_FORCING, rng=np.random.default_rng(0))
    np.testing.assert_array_equal(res.alignment[0], np.ones((4, 1)))


def test_alignment_rows_sum_to_one(gen, batch):
    res = gen.run_batch(batch, FREE_RUNNING, masks=masks_for(gen, batch))
    for b, n in enumerate(batch.symbol_valid.sum(1)):
        a = res.alignment[b]
        assert (a >= 0).all()
        np.testing.assert_allclose(a[:, :n].sum(1), 1.0, atol=1e-12)
        assert (a[:, n:] == 0).all()


@pytest.mark.parametrize("kind", ["tf", "fr", "ss"])
def test_fused_and_stepwise_decoding_agree(gen, batch, kind):
    mode = DecodeMode.scheduled(0.5) if kind == "ss" else DecodeMode(kind)
    masks = masks_for(gen, batch)
    runs = {}
    for fused in (True, False):
        runs[fused] = gen.run_batch(batch, mode, rng=np.random.default_rng(3), masks=masks,
                                    fused=fused)
    np.testing.assert_allclose(runs[True].predicted.value, runs[False].predicted.value,
                               rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(runs[True].behavior.value, runs[False].behavior.value,
                               rtol=1e-12, atol=1e-14)
    np.testing.assert_array_equal(runs[True].feedback_trace[:, 1:],
                                  runs[False].feedback_trace[:, 1:])

    def loss(fused):
        def fn():
            r = gen.run_batch(batch, mode, rng=np.random.default_rng(3), masks=masks,
                              fused=fused)
            return ops.add(ops.mse(r.predicted, np.full(r.predicted.shape, 0.3)),
                           ops.mean(ops.mul(r.behavior, r.behavior)))
        return fn

    _, g1 = forward_backward(loss(True), gen.params)
    _, g2 = forward_backward(loss(False), gen.params)
    for name in g1:
        np.testing.assert_allclose(g1[name], g2[name], rtol=1e-9, atol=1e-13, err_msg=name)


def test_behavior_rows_are_the_captured_hiddens(gen, batch):
    res = gen.run_batch(batch, TEACHER_FORCING, masks=masks_for(gen, batch), fused=False)
    for t, step in enumerate(res.steps):
        row = np.concatenate([step.attn_h.value, step.dec_h.value], axis=-1)
        np.testing.assert_array_equal(res.behavior.value[:, t], row)
    c = gen.config
    assert res.behavior.shape[-1] == c.attn_rnn_hidden + c.dec_rnn_hidden == c.behavior_dim


def test_scheduled_sampling_degenerates_to_tf_and_fr(gen, batch):
    masks = masks_for(gen, batch)
    tf = gen.run_batch(batch, TEACHER_FORCING, masks=masks)
    fr = gen.run_batch(batch, FREE_RUNNING, masks=masks)
    ss1 = gen.run_batch(batch, DecodeMode.scheduled(1.0), rng=np.random.default_rng(1),
                        masks=masks)
    ss0 = gen.run_batch(batch, DecodeMode.scheduled(0.0), rng=np.random.default_rng(1),
                        masks=masks)
    assert ss1.predicted.value.tobytes() == tf.predicted.value.tobytes()
    assert ss1.behavior.value.tobytes() == tf.behavior.value.tobytes()
    assert ss0.predicted.value.tobytes() == fr.predicted.value.tobytes()
    assert ss0.behavior.value.tobytes() == fr.behavior.value.tobytes()


def test_feeding_back_own_predictions_as_targets_matches_free_running(gen, batch):
    masks = masks_for(gen, batch)
    fr = gen.run_batch(batch, FREE_RUNNING, masks=masks)
    echoed = Batch(batch.ids, batch.symbols, batch.symbol_valid, fr.predicted.value.copy(),
                   batch.lengths)
    tf = gen.run_batch(echoed, TEACHER_FORCING, masks=masks)
    np.testing.assert_array_equal(tf.behavior.value, fr.behavior.value)


@given(st.integers(0, 5), st.floats(-1, 1))
def test_teacher_forcing_locality(j, delta):
    cfg = GeneratorConfig(vocab_size=6, frame_dim=4, embed_dim=5, encoder_hidden=4,
                          prenet_dims=(6,), attn_rnn_hidden=7, dec_rnn_hidden=6, attention_dim=5)
    g = Generator(cfg, seed=2)
    targets = np.random.default_rng(0).uniform(size=(6, 4))
    masks = DropoutMasks.draw(np.random.default_rng(1), 6, 1, cfg.prenet_dims, 0.5)
    base = g.run([1, 2], targets, TEACHER_FORCING, masks=masks).predicted.value[0]
    bumped = targets.copy()
    bumped[j] += delta
    out = g.run([1, 2], bumped, TEACHER_FORCING, masks=masks).predicted.value[0]
    np.testing.assert_array_equal(out[:j + 1], base[:j + 1])


def test_gradient_flows_through_free_running_feedback(gen, batch):
    masks = masks_for(gen, batch)
    target = np.full((batch.size, batch.T, gen.config.frame_dim), 0.2)
    fr_pred = gen.run_batch(batch, FREE_RUNNING, masks=masks).predicted.value.copy()
    detached = Batch(batch.ids, batch.symbols, batch.symbol_valid, fr_pred, batch.lengths)

    def attached():
        return ops.mse(gen.run_batch(batch, FREE_RUNNING, masks=masks).predicted, target)

    def cut():
        return ops.mse(gen.run_batch(detached, TEACHER_FORCING, masks=masks).predicted, target)

    l1, g1 = forward_backward(attached, gen.params)
    l2, g2 = forward_backward(cut, gen.params)
    assert l1 == l2
    assert any(not np.allclose(g1[k], g2[k], rtol=1e-6, atol=0) for k in g1)


def test_free_running_error_compounds_over_time():
    cfg = GeneratorConfig(vocab_size=6, frame_dim=4, embed_dim=8, encoder_hidden=8,
                          prenet_dims=(8,), attn_rnn_hidden=12, dec_rnn_hidden=12,
                          attention_dim=8)
    corpus = CorpusConfig(vocab_size=6, frame_dim=4, seed=4)
    rising = 0
    for seed in range(10):
        g = Generator(cfg, seed=seed)
        utt = make_split(corpus, "train", 1)[0]
        masks = DropoutMasks.draw(np.random.default_rng(seed), utt.T, 1, cfg.prenet_dims, 0.5)
        base = g.run(utt.symbols, None, FREE_RUNNING, T=utt.T, masks=masks).predicted.value[0]
        g.params["gen.proj.w"].value += 0.05 * np.random.default_rng(seed).normal(
            size=g.params["gen.proj.w"].shape)
        moved = g.run(utt.symbols, None, FREE_RUNNING, T=utt.T, masks=masks).predicted.value[0]
        diff = np.linalg.norm(moved - base, axis=1)
        assert (diff[1:] > 0).all()
        rising += np.polyfit(np.arange(len(diff)), diff, 1)[0] > 0
    assert rising >= 6


def test_padding_does_not_change_valid_outputs(gen, batch):
    masks = masks_for(gen, batch)
    full = gen.run_batch(batch, TEACHER_FORCING, masks=masks)
    for b in range(batch.size):
        one = make_batch([type("U", (), dict(id=batch.ids[b],
                                              symbols=batch.symbols[b, :batch.symbol_valid[b].sum()],
                                              frames=batch.frames[b, :batch.lengths[b]],
                                              T=int(batch.lengths[b])))()])
        m = DropoutMasks(tuple(layer[:one.T, b:b + 1] for layer in masks.layers))
        single = gen.run_batch(one, TEACHER_FORCING, masks=m)
        n = int(batch.lengths[b])
        np.testing.assert_allclose(single.predicted.value[0], full.predicted.value[b, :n],
                                   rtol=1e-12, atol=1e-14)


def test_mode_argument_validation(gen, batch):
    with pytest.raises(InputError):
        gen.run([1], None, TEACHER_FORCING, T=3, rng=np.random.default_rng(0))
    with pytest.raises(InputError):
        gen.run([1], None, FREE_RUNNING, T=0, rng=np.random.default_rng(0))
    with pytest.raises(InputError):
        gen.run_batch(batch, FREE_RUNNING)  # neither rng nor masks
    with pytest.raises(ConfigError):
        DecodeMode("ss")
    with pytest.raises(ConfigError):
        DecodeMode("tf", 0.5)
    with pytest.raises(ConfigError):
        DecodeMode.scheduled(1.5)
    with pytest.raises(ConfigError):
        GeneratorConfig(cell="lstm")


def test_ss_probability_schedule():
    s = SsSchedule(1.0, 0.5, 50_000)
    assert ss_probability(s, 0) == 1.0
    assert ss_probability(s, 25_000) == 0.75
    assert ss_probability(s, 50_000) == 0.5
    assert ss_probability(s, 90_000) == 0.5


@given(st.integers(0, 10**6), st.floats(0, 1), st.floats(0, 1), st.integers(1, 10**5))
def test_ss_probability_stays_in_band(step, a, b, decay):
    lo, hi = sorted((a, b))
    p = ss_probability(SsSchedule(hi, lo, decay), step)
    assert lo <= p <= hi


def test_scheduled_sampling_trace_follows_coins(gen, batch):
    masks = masks_for(gen, batch)
    res = gen.run_batch(batch, DecodeMode.scheduled(0.5), rng=np.random.default_rng(7),
                        masks=masks)
    coins = np.random.default_rng(7).random((batch.T, batch.size)) < 0.5
    np.testing.assert_array_equal(res.feedback_trace[:, 1:], coins.T[:, 1:])
