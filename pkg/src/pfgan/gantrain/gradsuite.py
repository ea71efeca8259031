"""Finite-difference checks of the three training losses on small instances.

Everything random inside a loss (dropout masks, scheduled-sampling coins)
is drawn once up front and the discriminator's singular-vector estimates
are frozen, so each loss is a deterministic function of the parameters.
"""
import time
from typing import NamedTuple

import numpy as np

from ..diffmath import ParamStore, grad_check
from ..discriminator import Discriminator, DiscriminatorConfig
from ..generator import (FREE_RUNNING, TEACHER_FORCING, DropoutMasks, Generator, GeneratorConfig,
                         make_batch)
from ..synthtask import CorpusConfig, make_split
from .losses import batch_reconstruction_loss, disc_loss, gen_loss

SMALL_GENERATOR = dict(vocab_size=5, frame_dim=3, embed_dim=3, encoder_hidden=3,
                       prenet_dims=(3,), prenet_dropout=0.5, attn_rnn_hidden=4,
                       dec_rnn_hidden=4, attention_dim=3)
SMALL_CORPUS = dict(vocab_size=5, frame_dim=3, d_min=1, d_max=2, l_min=2, l_max=4)
SMALL_DISC_HIDDEN = 4
# Random offset added to every trainable weight so the check runs at a
# generic point: zero-initialised biases would put the go-frame's prenet
# pre-activations exactly on the ReLU kink.
PARAM_JITTER = 0.5
# Losses sit near 2 (the hinge loss with scores inside the margin), and
# several gradient components are exactly zero by symmetry, so the central
# difference carries an absolute noise of a couple of ulps of the loss over
# 2*eps.  This step keeps that noise under 1e-12 while truncation error
# stays well below the tolerance.
DEFAULT_EPS = 5e-4


class Instance(NamedTuple):
    gen: Generator
    disc: Discriminator
    batch: object
    masks: DropoutMasks
    behaviors_t: np.ndarray
    behaviors_f: np.ndarray


def small_instance(seed, batch_size=2, jitter=PARAM_JITTER):
    """Random generator, discriminator and batch with every T <= 8 and dims <= 16."""
    gcfg = GeneratorConfig(**SMALL_GENERATOR)
    gen = Generator(gcfg, seed=seed)
    disc = Discriminator(DiscriminatorConfig(input_dim=gcfg.behavior_dim,
                                             hidden_dim=SMALL_DISC_HIDDEN), seed=seed + 1)
    rng = np.random.default_rng([seed, 7])
    for p in list(gen.params.trainable()) + list(disc.params.trainable()):
        p.value += rng.normal(0.0, jitter, p.shape)
    disc.power_iterate(3)
    utts = make_split(CorpusConfig(seed=seed, **SMALL_CORPUS), "train", batch_size)
    batch = make_batch(utts)
    rng = np.random.default_rng(seed)
    masks = DropoutMasks.draw(rng, batch.T, batch.size, gcfg.prenet_dims, gcfg.prenet_dropout)
    bt = gen.run_batch(batch, TEACHER_FORCING, masks=masks).behavior.value
    bf = gen.run_batch(batch, FREE_RUNNING, masks=masks, T=batch.T).behavior.value
    return Instance(gen, disc, batch, masks, bt, bf)


def loss_t(inst):
    res = inst.gen.run_batch(inst.batch, TEACHER_FORCING, masks=inst.masks)
    return batch_reconstruction_loss(res.predicted, inst.batch.frames, inst.batch.lengths)


def loss_d(inst):
    lengths = inst.batch.lengths
    st = inst.disc.score_batch(inst.behaviors_t, lengths)
    sf = inst.disc.score_batch(inst.behaviors_f, lengths)
    return disc_loss(st, sf)


def loss_g(inst, alpha=1.0):
    b = inst.batch
    enc = inst.gen.encode_batch(b.symbols, b.symbol_valid)
    real = inst.gen.run_batch(b, TEACHER_FORCING, masks=inst.masks, enc=enc)
    free = inst.gen.run_batch(b, FREE_RUNNING, masks=inst.masks, T=b.T, enc=enc)
    w = inst.disc.weights()
    st = inst.disc.score_batch(real.behavior, real.lengths, w)
    sf = inst.disc.score_batch(free.behavior, free.lengths, w)
    l_t = batch_reconstruction_loss(real.predicted, b.frames, b.lengths)
    return gen_loss(l_t, st, sf, alpha)


LOSSES = {
    "L_T": (loss_t, lambda inst: inst.gen.params),
    "L_D": (loss_d, lambda inst: inst.disc.params),
    "L_G": (loss_g, lambda inst: ParamStore.union(inst.gen.params, inst.disc.params)),
}


def run_suite(seeds=range(10), eps=DEFAULT_EPS, losses=None):
    """Max relative error per loss over ``seeds``; returns ``({loss: err}, seconds)``."""
    start = time.perf_counter()
    worst = {}
    for name in (losses or LOSSES):
        fn, store = LOSSES[name]
        errs = []
        for seed in seeds:
            inst = small_instance(seed)
            errs.append(grad_check(lambda: fn(inst), store(inst), eps=eps))
        worst[name] = max(errs)
    return worst, time.perf_counter() - start
