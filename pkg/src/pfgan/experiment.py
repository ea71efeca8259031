"""The desk-scale comparison of training modes on the synthetic task.

One fixed corpus; per seed, a shared teacher-forced pretraining run
followed by each second-phase mode starting from the same weights, all
evaluated on the pathological (long, unseen-bigram) split.
"""
import time
from dataclasses import dataclass, field, replace

from .evalcli.evaluate import GeneratorModel, eval_model
from .gantrain import TrainConfig, Trainer
from .generator import Generator, GeneratorConfig
from .synthtask import CorpusConfig, make_split


@dataclass(frozen=True)
class DeskSetup:
    corpus: CorpusConfig = CorpusConfig(seed=0)
    n_train: int = 2000
    n_eval: int = 200
    eval_length_multiplier: int = 2
    generator: GeneratorConfig = GeneratorConfig()
    train: TrainConfig = TrainConfig()
    eval_seed: int = 0


@dataclass
class ModeResult:
    mode: str
    fr_mse: float
    tf_mse: float
    garble_rate: float
    curve_first_half: float
    curve_second_half: float
    final_L_T: float
    seconds: float


@dataclass
class SeedResult:
    seed: int
    pretrain_first_L_T: float
    pretrain_last_L_T: float
    pretrain_seconds: float
    modes: dict = field(default_factory=dict)


def build_corpus(setup):
    train = make_split(setup.corpus, "train", setup.n_train)
    patho = make_split(setup.corpus, "eval", setup.n_eval, setup.eval_length_multiplier)
    return train, patho


def _evaluate(gen, utts, setup, mode, trainer, seconds):
    report = eval_model(GeneratorModel(gen), utts, setup.eval_seed)
    first, second = report.curve_halves()
    return ModeResult(mode, report.mean_fr_mse, report.mean_tf_mse, report.garble_rate,
                      first, second, trainer.reports[-1].L_T if trainer.reports else float("nan"),
                      seconds)


def run_seed(setup, seed, train, patho, variants, log=None):
    """Pretrain once, then train each ``(name, TrainConfig overrides)`` variant."""
    base = replace(setup.train, seed=seed)
    gen = Generator(setup.generator, seed=seed)
    t0 = time.perf_counter()
    pre = Trainer(base, gen, train, phase="pretrain").run()
    pre_seconds = time.perf_counter() - t0
    if log:
        log(f"seed {seed}: pretrain {pre_seconds:.0f}s "
            f"L_T {pre.reports[0].L_T:.5f} -> {pre.reports[-1].L_T:.5f}")
    state = gen.params.state()
    result = SeedResult(seed, pre.reports[0].L_T, pre.reports[-1].L_T, pre_seconds)
    for name, overrides in variants:
        cfg = replace(base, **overrides)
        g = Generator(setup.generator, seed=seed)
        g.params.load_state(state)
        t0 = time.perf_counter()
        trainer = Trainer(cfg, g, train, phase="train").run()
        seconds = time.perf_counter() - t0
        result.modes[name] = _evaluate(g, patho, setup, name, trainer, seconds)
        if log:
            r = result.modes[name]
            log(f"seed {seed}: {name} {seconds:.0f}s fr_mse={r.fr_mse:.5f} "
                f"tf_mse={r.tf_mse:.5f} garble={r.garble_rate:.3f} "
                f"curve {r.curve_first_half:.4f}/{r.curve_second_half:.4f}")
    return result


EXPOSURE_VARIANTS = [("tf", {"mode": "tf"}), ("tf-gan", {"mode": "tf-gan"})]
SS_VARIANTS = [("ss-0.5", {"mode": "ss", "ss_end": 0.5}), ("ss-0", {"mode": "ss", "ss_end": 0.0})]


def run_desk(setup=DeskSetup(), seeds=(0, 1, 2), variants=EXPOSURE_VARIANTS + SS_VARIANTS,
             log=None):
    train, patho = build_corpus(setup)
    return [run_seed(setup, s, train, patho, variants, log) for s in seeds]
