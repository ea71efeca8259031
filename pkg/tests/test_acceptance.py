"""Acceptance checks, one PASS/FAIL line per criterion.

Criteria 7, 8 and 10 share one desk experiment: a fixed corpus of 2,000
training and 200 double-length evaluation utterances, three seeds, a
shared 1,500-step teacher-forced pretraining per seed, then 1,500 steps
of each second-phase variant from the same weights.
"""
import struct
import time

import numpy as np
import pytest

from pfgan.discriminator import Discriminator, DiscriminatorConfig, spectral_normalize
from pfgan.errors import BadMagic, Truncated, VersionMismatch
from pfgan.experiment import DeskSetup, EXPOSURE_VARIANTS, SS_VARIANTS, run_desk
from pfgan.gantrain import (GateState, TrainConfig, Trainer, decode_checkpoint, disc_loss,
                            encode_checkpoint, gen_loss, train_gan, update_gates)
from pfgan.gantrain.gradsuite import run_suite
from pfgan.generator import (FREE_RUNNING, TEACHER_FORCING, DecodeMode, DropoutMasks, Generator,
                             GeneratorConfig, make_batch)
from pfgan.synthtask import CorpusConfig, make_split

SEEDS = (0, 1, 2)
TINY_GEN = GeneratorConfig(vocab_size=6, frame_dim=4, embed_dim=5, encoder_hidden=4,
                           prenet_dims=(6, 5), attn_rnn_hidden=7, dec_rnn_hidden=6,
                           attention_dim=5)
TINY_CORPUS = make_split(CorpusConfig(vocab_size=6, frame_dim=4, d_min=1, d_max=2, l_min=2,
                                      l_max=4, seed=3), "train", 12)


def tiny_train(**kw):
    base = dict(mode="tf-gan", gan_steps=6, probe_period=2, probe_batches=1, batch_size=3,
                disc_hidden=4, seed=9)
    base.update(kw)
    return TrainConfig(**base)


def majority(flags):
    return sum(flags) >= 2


@pytest.fixture(scope="module")
def desk():
    t0 = time.perf_counter()
    results = run_desk(DeskSetup(), SEEDS, EXPOSURE_VARIANTS + SS_VARIANTS,
                       log=lambda m: print(m, flush=True))
    return results, time.perf_counter() - t0


def test_criterion_01_closed_form_losses(verdict):
    t0 = time.perf_counter()
    errs = [abs(float(disc_loss([a], [b]).value) - want)
            for a, b, want in [(1, -1, 0.0), (0, 0, 2.0), (0.5, -2, 0.5)]]
    errs.append(abs(float(gen_loss(0.5, [0.8], [0.2], 1e-3).value) - 0.5006))
    errs.append(abs(float(gen_loss(0.5, [0.8], [0.2], 0.0).value) - 0.5))
    errs.append(abs(float(gen_loss(0.5, [0.4], [0.4], 1e-3).value) - 0.5))
    rng = np.random.default_rng(0)
    for _ in range(50):
        l_t = rng.uniform(0, 2)
        st, sf = rng.normal(size=4), rng.normal(size=4)
        slope = -(sf.mean() - st.mean())
        for a in (0.0, 1e-3, 2e-3):
            errs.append(abs(float(gen_loss(l_t, st, sf, a).value) - (l_t + a * slope)))
    seconds = time.perf_counter() - t0
    worst = max(errs)
    ok = worst <= 1e-12 and seconds < 1.0
    verdict(1, ok, f"max abs err {worst:.1e} (tol 1e-12), {seconds:.3f}s (< 1s)")
    assert ok


def test_criterion_02_gradient_checks(verdict):
    worst, seconds = run_suite(range(10))
    ok = max(worst.values()) <= 1e-4 and seconds < 60
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    verdict(2, ok, f"max rel err {detail} (tol 1e-4) over 10 seeds, {seconds:.1f}s (< 60s)")
    assert ok


def test_criterion_03_spectral_normalization(verdict):
    tops = []
    for seed in range(10):
        rng = np.random.default_rng(seed)
        w_sn, _, _ = spectral_normalize(rng.normal(size=(8, 8)), rng.normal(size=8), 50)
        tops.append(np.linalg.svd(w_sn, compute_uv=False)[0])
    ok = all(0.99 <= s <= 1.01 for s in tops)
    verdict(3, ok, f"top singular value after 50 iterations in [{min(tops):.6f}, "
                   f"{max(tops):.6f}] (band [0.99, 1.01]), 10 matrices")
    assert ok


def test_criterion_04_causality(verdict):
    disc = Discriminator(DiscriminatorConfig(input_dim=6, hidden_dim=4, heads=2), seed=2)
    rng = np.random.default_rng(0)
    feature_ok = True
    for _ in range(20):
        b = rng.normal(size=(9, 6))
        t = int(rng.integers(0, 9))
        bumped = b.copy()
        bumped[t:] += rng.normal(size=(9 - t, 6))
        feature_ok &= (disc.features(b).value[:t].tobytes()
                       == disc.features(bumped).value[:t].tobytes())
    gen = Generator(TINY_GEN, seed=2)
    targets = rng.uniform(size=(7, 4))
    masks = DropoutMasks.draw(rng, 7, 1, TINY_GEN.prenet_dims, TINY_GEN.prenet_dropout)
    base = gen.run([1, 2, 3], targets, TEACHER_FORCING, masks=masks).predicted.value[0]
    local_ok = True
    for j in range(7):
        bumped = targets.copy()
        bumped[j:] += 1.0
        out = gen.run([1, 2, 3], bumped, TEACHER_FORCING, masks=masks).predicted.value[0]
        local_ok &= out[:j + 1].tobytes() == base[:j + 1].tobytes()
    ok = bool(feature_ok and local_ok)
    verdict(4, ok, f"attention features causal bitwise: {feature_ok}; "
                   f"teacher-forced locality exact: {local_ok}")
    assert ok


def test_criterion_05_gating(verdict):
    table = {0.70: (False, True), 0.75: (False, True), 0.80: (True, True),
             0.97: (True, False), 0.98: (True, False)}
    table_ok = all(update_gates(a, 0.75, 0.97) == GateState(*g)
                   for a, g in table.items())

    t = Trainer(tiny_train(), Generator(TINY_GEN, seed=11), TINY_CORPUS,
                accuracy_probe=lambda i: 0.99)
    t.step(0)
    frozen = t.disc.params.state()
    for i in range(1, 6):
        t.step(i)
    freeze_ok = all(v.tobytes() == frozen[k].tobytes() for k, v in t.disc.params.state().items())

    t = Trainer(tiny_train(alpha=0.7), Generator(TINY_GEN, seed=11), TINY_CORPUS)
    t.generator_grads(3, s_g=False)
    closed = {p.name: p.grad.copy() for p in t.gen.params.trainable()}
    t.generator_grads(3, s_g=True, alpha=0.0)
    zero_ok = all(np.array_equal(closed[p.name], p.grad) for p in t.gen.params.trainable())

    ok = table_ok and freeze_ok and zero_ok
    verdict(5, ok, f"truth table: {table_ok}; discriminator frozen when s_d=False: {freeze_ok}; "
                   f"s_g=False grads equal alpha=0 grads: {zero_ok}")
    assert ok


def test_criterion_06_decode_mode_degeneracies(verdict):
    gen = Generator(TINY_GEN, seed=5)
    utts = make_split(CorpusConfig(vocab_size=6, frame_dim=4, d_max=3, l_max=5, seed=1),
                      "train", 4)
    batch = make_batch(utts)
    masks = DropoutMasks.draw(np.random.default_rng(0), batch.T, batch.size,
                              TINY_GEN.prenet_dims, TINY_GEN.prenet_dropout)
    tf = gen.run_batch(batch, TEACHER_FORCING, masks=masks)
    fr = gen.run_batch(batch, FREE_RUNNING, masks=masks)
    ss1 = gen.run_batch(batch, DecodeMode.scheduled(1.0), rng=np.random.default_rng(1),
                        masks=masks)
    ss0 = gen.run_batch(batch, DecodeMode.scheduled(0.0), rng=np.random.default_rng(1),
                        masks=masks)
    one = (ss1.predicted.value.tobytes() == tf.predicted.value.tobytes()
           and ss1.behavior.value.tobytes() == tf.behavior.value.tobytes())
    zero = (ss0.predicted.value.tobytes() == fr.predicted.value.tobytes()
            and ss0.behavior.value.tobytes() == fr.behavior.value.tobytes())
    verdict(6, one and zero, f"SS(p=1) == TF bitwise: {one}; SS(p=0) == FR bitwise: {zero}")
    assert one and zero


@pytest.mark.desk
def test_criterion_07_exposure_bias(desk, verdict):
    results, _ = desk
    wins, parts, seconds = [], [], 0.0
    for r in results:
        tf, gan = r.modes["tf"], r.modes["tf-gan"]
        wins.append(gan.fr_mse <= tf.fr_mse and gan.garble_rate <= tf.garble_rate)
        seconds += tf.seconds + gan.seconds + r.pretrain_seconds
        parts.append(f"seed {r.seed}: FR MSE {tf.fr_mse:.4f} -> {gan.fr_mse:.4f}, "
                     f"garble {tf.garble_rate:.3f} -> {gan.garble_rate:.3f}")
    ok = majority(wins) and seconds <= 30 * 60
    verdict(7, ok, f"TF-GAN no worse than TF in {sum(wins)}/3 seeds (need 2), "
                   f"{seconds / 60:.1f} min (<= 30); " + "; ".join(parts))
    assert ok


@pytest.mark.desk
def test_criterion_08_scheduled_sampling_degradation(desk, verdict):
    results, _ = desk
    worse = [r.modes["ss-0"].tf_mse > r.modes["ss-0.5"].tf_mse for r in results]
    parts = [f"seed {r.seed}: {r.modes['ss-0.5'].tf_mse:.5f} vs {r.modes['ss-0'].tf_mse:.5f}"
             for r in results]
    ok = majority(worse)
    verdict(8, ok, f"TF-mode MSE higher with p->0 than p->0.5 in {sum(worse)}/3 seeds "
                   f"(need 2); " + "; ".join(parts))
    assert ok


def test_criterion_09_determinism_and_persistence(tmp_path, verdict):
    blobs = []
    for k in range(2):
        path = tmp_path / f"m{k}.csv"
        train_gan(tiny_train(), Generator(TINY_GEN, seed=11), TINY_CORPUS, metrics_path=path)
        blobs.append(path.read_bytes())
    csv_ok = blobs[0] == blobs[1]

    state = Generator(TINY_GEN, seed=3).params.state()
    data = encode_checkpoint(state)
    back = decode_checkpoint(data).tensors
    round_ok = list(back) == list(state) and all(
        back[k].shape == v.shape and back[k].tobytes() == v.tobytes() for k, v in state.items())

    first = next(iter(state))
    cut = 12 + 2 + len(first.encode()) + 1 + 4 * state[first].ndim + 8
    errors = []
    for blob, err in ((b"Q" + data[1:], BadMagic),
                      (data[:4] + struct.pack("<I", 9) + data[8:], VersionMismatch),
                      (data[:cut], Truncated)):
        try:
            decode_checkpoint(blob)
            errors.append(False)
        except err as exc:
            errors.append(err is not Truncated or repr(first) in str(exc))
    err_ok = all(errors)
    ok = csv_ok and round_ok and err_ok
    verdict(9, ok, f"metrics CSV bitwise repeatable: {csv_ok}; checkpoint round-trip bitwise: "
                   f"{round_ok}; bad magic/version/truncation errors: {err_ok}")
    assert ok


@pytest.mark.desk
def test_criterion_10_error_accumulation(desk, verdict):
    results, _ = desk
    rising = [r.modes["tf"].curve_second_half > r.modes["tf"].curve_first_half for r in results]
    parts = [f"seed {r.seed}: {r.modes['tf'].curve_first_half:.4f} -> "
             f"{r.modes['tf'].curve_second_half:.4f}" for r in results]
    ok = majority(rising)
    verdict(10, ok, f"TF model FR error second half > first half in {sum(rising)}/3 seeds "
                    f"(need 2); " + "; ".join(parts))
    assert ok
