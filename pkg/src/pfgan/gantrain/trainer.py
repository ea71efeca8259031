"""Pretraining and the accuracy-gated adversarial training loop."""
import numpy as np

from ..diffmath import AdamState, LrSchedule, Tape, adam_step, lr_at
from ..discriminator import Discriminator, DiscriminatorConfig, accuracy_from_scores
from ..errors import ConfigError, InputError, NumericFailure
from ..generator import (FREE_RUNNING, TEACHER_FORCING, DecodeMode, DropoutMasks, SsSchedule,
                         make_batch, ss_probability)
from .checkpoint import save_checkpoint
from .losses import batch_reconstruction_loss, disc_loss, gen_loss, update_gates
from .metrics import MetricsWriter
from .state import GateState, LossReport, TrainConfig

# SeedSequence stream tags
_TAG_BATCHES = {"pretrain": 101, "train": 102}
_TAG_STEP = {"pretrain": 201, "train": 202}
_TAG_PROBE = 301
_TAG_DISC_INIT = 401


def _rng(*entropy):
    return np.random.default_rng(np.random.SeedSequence([int(e) for e in entropy]))


class BatchSampler:
    """Epoch-wise seeded shuffles; batch ``i`` is a pure function of ``(seed, i)``."""

    def __init__(self, n, batch_size, seed, tag):
        if n < 1:
            raise InputError("training corpus is empty")
        self.n, self.batch_size, self.seed, self.tag = n, batch_size, seed, tag
        self._perms = {}

    def _perm(self, epoch):
        perm = self._perms.get(epoch)
        if perm is None:
            if len(self._perms) > 4:
                self._perms.clear()
            perm = _rng(self.seed, self.tag, epoch).permutation(self.n)
            self._perms[epoch] = perm
        return perm

    def indices(self, step):
        start = step * self.batch_size
        return [int(self._perm(p // self.n)[p % self.n])
                for p in range(start, start + self.batch_size)]


class Trainer:
    """Runs one training phase over a generator, and a discriminator when adversarial.

    ``phase`` is ``"pretrain"`` (always teacher forced) or ``"train"``.
    ``accuracy_probe`` replaces the discriminator-accuracy measurement; it
    is called with the step index.
    """

    def __init__(self, config, generator, corpus, phase="train", discriminator=None,
                 accuracy_probe=None):
        if phase not in _TAG_BATCHES:
            raise ConfigError(f"unknown phase {phase!r}")
        self.config = config
        self.phase = phase
        self.mode = "tf" if phase == "pretrain" else config.mode
        self.steps = config.pretrain_steps if phase == "pretrain" else config.gan_steps
        self.gen = generator
        self.corpus = list(corpus)
        gcfg = generator.config
        for u in self.corpus:
            if u.frames.shape[1] != gcfg.frame_dim:
                raise ConfigError(f"utterance {u.id} has frame dim {u.frames.shape[1]}, "
                                  f"generator expects {gcfg.frame_dim}")
        self.sampler = BatchSampler(len(self.corpus), config.batch_size, config.seed,
                                    _TAG_BATCHES[phase])
        decay = config.lr_decay_steps or max(self.steps, 1)
        self.lr_g = LrSchedule(config.lr_g, config.lr_final, decay)
        self.opt_g = AdamState.for_params(generator.params)
        self.ss = SsSchedule(config.ss_start, config.ss_end,
                             config.ss_decay_steps or max(self.steps, 1))
        self.adversarial = self.mode.endswith("-gan")
        self.disc = None
        self.gates = None
        if self.adversarial:
            if discriminator is None:
                dcfg = DiscriminatorConfig(input_dim=gcfg.behavior_dim,
                                           hidden_dim=config.disc_hidden, heads=config.disc_heads)
                discriminator = Discriminator(dcfg, seed=int(
                    _rng(config.seed, _TAG_DISC_INIT).integers(2**31)))
            if discriminator.config.input_dim != gcfg.behavior_dim:
                raise ConfigError(f"discriminator input_dim {discriminator.config.input_dim} "
                                  f"differs from behavior dim {gcfg.behavior_dim}")
            self.disc = discriminator
            self.lr_d = LrSchedule(config.lr_d, config.lr_final, decay)
            self.opt_d = AdamState.for_params(discriminator.params)
            self.gates = GateState()
            self.probe_set = self._build_probe_set()
        self.accuracy_probe = accuracy_probe
        self.reports = []

    # -- pieces ----------------------------------------------------------

    def _build_probe_set(self):
        n, B = len(self.corpus), self.config.batch_size
        if n < 1:
            raise ConfigError("cannot build a probe set from an empty corpus")
        perm = _rng(self.config.seed, _TAG_PROBE).permutation(n)
        picks = [perm[(k * B + j) % n] for k in range(self.config.probe_batches)
                 for j in range(B)]
        return [make_batch([self.corpus[i] for i in picks[k * B:(k + 1) * B]])
                for k in range(self.config.probe_batches)]

    def real_mode(self, step):
        if self.mode in ("ss", "ss-gan"):
            return DecodeMode.scheduled(ss_probability(self.ss, step))
        return TEACHER_FORCING

    def batch_at(self, step):
        return make_batch([self.corpus[i] for i in self.sampler.indices(step)])

    def _draw(self, batch, *entropy):
        """Dropout masks and a coin rng, both pure in ``entropy``."""
        c = self.gen.config
        masks = DropoutMasks.draw(_rng(*entropy, 0), batch.T, batch.size, c.prenet_dims,
                                  c.prenet_dropout)
        return masks, (lambda: _rng(*entropy, 1))

    def _decode_pair(self, batch, mode, masks, coins):
        enc = self.gen.encode_batch(batch.symbols, batch.symbol_valid)
        real = self.gen.run_batch(batch, mode, rng=coins(), masks=masks, enc=enc)
        free = None
        if self.adversarial:
            free = self.gen.run_batch(batch, FREE_RUNNING, masks=masks, T=batch.T, enc=enc)
        return real, free

    def generator_grads(self, step, s_g=None, alpha=None):
        """Forward and backward of the generator loss at ``step``.

        Leaves gradients in the generator params (discriminator grads are
        zeroed) and returns ``(report, batch, masks, coins)``.
        """
        cfg = self.config
        s_g = self.gates.s_g if (s_g is None and self.gates) else bool(s_g)
        alpha = cfg.alpha if alpha is None else alpha
        batch = self.batch_at(step)
        masks, coins = self._draw(batch, cfg.seed, _TAG_STEP[self.phase], step)
        report = LossReport(step, self.phase, self.mode, 0.0, lr_at(self.lr_g, step))
        self.gen.params.zero_grad()
        with Tape() as tape:
            real, free = self._decode_pair(batch, self.real_mode(step), masks, coins)
            l_t = batch_reconstruction_loss(real.predicted, batch.frames, batch.lengths)
            loss = l_t
            if self.adversarial:
                w = self.disc.weights()
                st = self.disc.score_batch(real.behavior, real.lengths, w)
                sf = self.disc.score_batch(free.behavior, free.lengths, w)
                l_g = gen_loss(l_t, st, sf, alpha)
                report.L_G = float(l_g.value)
                report.score_t = float(st.value.mean())
                report.score_f = float(sf.value.mean())
                if s_g:
                    loss = l_g
            tape.backward(loss)
        if self.disc is not None:
            self.disc.params.zero_grad()
        report.L_T = float(l_t.value)
        return report, batch, masks, coins

    def discriminator_step(self, step, batch, masks, coins):
        """Hinge update on fresh behaviors from the (already updated) generator."""
        self.disc.power_iterate()
        real, free = self._decode_pair(batch, self.real_mode(step), masks, coins)
        self.disc.params.zero_grad()
        with Tape() as tape:
            w = self.disc.weights()
            st = self.disc.score_batch(real.behavior.value, real.lengths, w)
            sf = self.disc.score_batch(free.behavior.value, free.lengths, w)
            l_d = disc_loss(st, sf)
            tape.backward(l_d)
        adam_step(self.disc.params, self.opt_d, lr_at(self.lr_d, step))
        return float(l_d.value)

    def measure_accuracy(self, step):
        """Discriminator accuracy on the fixed probe batches, with frozen u."""
        tf_scores, fr_scores = [], []
        for k, batch in enumerate(self.probe_set):
            masks, coins = self._draw(batch, self.config.seed, _TAG_PROBE, k)
            real, free = self._decode_pair(batch, self.real_mode(step), masks, coins)
            tf_scores += self.disc.score_batch(real.behavior, real.lengths).value.tolist()
            fr_scores += self.disc.score_batch(free.behavior, free.lengths).value.tolist()
        return accuracy_from_scores(tf_scores, fr_scores)

    def step(self, i):
        report, batch, masks, coins = self.generator_grads(i)
        adam_step(self.gen.params, self.opt_g, report.lr_g)
        if self.adversarial:
            report.s_g, report.s_d = self.gates.s_g, self.gates.s_d
            report.lr_d = lr_at(self.lr_d, i)
            if self.gates.s_d:
                report.L_D = self.discriminator_step(i, batch, masks, coins)
            if i % self.config.probe_period == 0:
                probe = self.accuracy_probe or self.measure_accuracy
                report.accuracy = float(probe(i))
                self.gates = update_gates(report.accuracy, self.config.r_low, self.config.r_high)
        self.reports.append(report)
        return report

    # -- driver ----------------------------------------------------------

    def optimizer_states(self):
        out = {"gen": self.opt_g}
        if self.disc is not None:
            out["disc"] = self.opt_d
        return out

    def params_state(self):
        state = self.gen.params.state()
        if self.disc is not None:
            state.update(self.disc.params.state())
        return state

    def run(self, checkpoint_path=None, metrics_path=None, log=None):
        """Train for the phase's step count; a numeric failure saves the last
        valid parameters before re-raising."""
        writer = MetricsWriter(metrics_path) if metrics_path else None
        try:
            for i in range(self.steps):
                report = self.step(i)
                if writer:
                    writer.write(report)
                if log and (i % 100 == 0 or i == self.steps - 1):
                    log(report)
        except NumericFailure:
            if checkpoint_path:
                save_checkpoint(self.params_state(), self.optimizer_states(), checkpoint_path)
            raise
        finally:
            if writer:
                writer.close()
        if checkpoint_path:
            save_checkpoint(self.params_state(), self.optimizer_states(), checkpoint_path)
        return self


def pretrain(config, generator, corpus, checkpoint_path=None, metrics_path=None, log=None):
    """Teacher-forced reconstruction training for ``config.pretrain_steps`` steps."""
    return Trainer(config, generator, corpus, phase="pretrain").run(
        checkpoint_path, metrics_path, log)


def train_gan(config, generator, corpus, checkpoint_path=None, metrics_path=None, log=None,
              discriminator=None, accuracy_probe=None):
    """Second phase in ``config.mode``; GAN modes follow the gated alternating scheme."""
    return Trainer(config, generator, corpus, phase="train", discriminator=discriminator,
                   accuracy_probe=accuracy_probe).run(checkpoint_path, metrics_path, log)
