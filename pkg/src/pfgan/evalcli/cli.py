"""Command-line entry point: ``pfgan <subcommand> ...``.

Exit codes: 0 success, 1 usage or configuration error, 2 numeric
failure, 3 I/O error.
"""
import argparse
import logging
import os
import sys

from ..errors import (ConfigError, DegenerateWeight, InputError, NumericFailure, OracleInvalid,
                      StorageError)
from ..gantrain import TrainConfig, load_checkpoint, pretrain, train_gan
from ..generator import Generator, GeneratorConfig
from ..synthtask import CorpusConfig, make_corpus, read_corpus
from .config import build, check_known, field_types, read_config_file
from .diagnostics import GarbleThresholds
from .evaluate import GeneratorModel, eval_model, write_report

log = logging.getLogger("pfgan")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3
SPLIT_SIZES = {"n_train": 2000, "n_dev": 200, "n_eval": 200, "eval_length_multiplier": 2}
EVAL_KEYS = {"eval_seed": 0}
GRAD_TOLERANCE = 1e-4


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    """Argument parser that reports usage problems through exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _flag(name):
    return "--" + name.replace("_", "-")


def _add_fields(parser, cls, skip=()):
    for name, kind in field_types(cls).items():
        if name in skip:
            continue
        parser.add_argument(_flag(name), dest=name, default=None, metavar=name.upper(),
                            help=f"{cls.__name__}.{name}")


def build_parser():
    p = Parser(prog="pfgan", description="Adversarial exposure-bias training on a synthetic task.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=Parser)

    g = sub.add_parser("gen-data", help="write train/dev/eval corpus files")
    g.add_argument("--config")
    g.add_argument("--out", required=True, help="output directory")
    _add_fields(g, CorpusConfig)
    for k in SPLIT_SIZES:
        g.add_argument(_flag(k), dest=k, default=None)

    for name, helptext in (("pretrain", "teacher-forced pretraining"),
                           ("train", "second-phase training in a given mode")):
        t = sub.add_parser(name, help=helptext)
        t.add_argument("--config")
        t.add_argument("--data", required=True, help="corpus directory or train file")
        t.add_argument("--out", required=True, help="checkpoint path")
        t.add_argument("--metrics", help="metrics CSV path (default: <out>.metrics.csv)")
        t.add_argument("--steps", default=None)
        if name == "train":
            t.add_argument("--init", required=True, help="pretrained checkpoint")
            t.add_argument("--mode", choices=["tf", "ss", "tf-gan", "ss-gan"], default=None)
        _add_fields(t, TrainConfig, skip=("mode",))
        _add_fields(t, GeneratorConfig)

    e = sub.add_parser("eval", help="evaluate a checkpoint on a corpus split")
    e.add_argument("--config")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--data", required=True, help="corpus split file or corpus directory")
    e.add_argument("--out-csv", required=True)
    e.add_argument("--curve-csv", help="default: <out-csv stem>_curve.csv")
    e.add_argument("--pgm-dir")
    e.add_argument("--eval-seed", dest="eval_seed", default=None)
    _add_fields(e, GarbleThresholds)
    _add_fields(e, GeneratorConfig)

    c = sub.add_parser("gradcheck", help="finite-difference check of every training loss")
    c.add_argument("--seeds", type=int, default=10)
    c.add_argument("--eps", type=float, default=None)
    return p


def _settings(args, *classes, extra=None):
    """Defaults < config file < flags, as a flat dict of raw values."""
    extra = dict(extra or {})
    values = dict(extra)
    if getattr(args, "config", None):
        from_file = read_config_file(args.config)
        check_known(from_file, CorpusConfig, GeneratorConfig, TrainConfig, GarbleThresholds,
                    extra=list(SPLIT_SIZES) + list(EVAL_KEYS))
        values.update(from_file)
    keys = set(extra)
    for cls in classes:
        keys |= set(field_types(cls))
    for k in keys:
        v = getattr(args, k, None)
        if v is not None:
            values[k] = v
    return values


def _corpus_file(path, default_split):
    if os.path.isdir(path):
        return os.path.join(path, f"{default_split}.pfd")
    return path


def _load_split(path, default_split, gcfg):
    K, F, utts = read_corpus(_corpus_file(path, default_split))
    if F != gcfg.frame_dim or K > gcfg.vocab_size:
        raise ConfigError(f"corpus has K={K}, F={F}; model expects vocab_size >= {K} "
                          f"and frame_dim={gcfg.frame_dim}")
    return utts


def _load_generator(path, gcfg, seed=0):
    gen = Generator(gcfg, seed=seed)
    tensors = load_checkpoint(path).tensors
    gen.params.load_state({k: v for k, v in tensors.items() if k.startswith("gen.")})
    return gen


def _log_report(r):
    extra = "" if r.L_D is None else f" L_D={r.L_D:.4f} s_g={r.s_g} s_d={r.s_d}"
    acc = "" if r.accuracy is None else f" acc={r.accuracy:.3f}"
    log.info("%s step %d L_T=%.6f%s%s", r.phase, r.step, r.L_T, extra, acc)


def cmd_gen_data(args):
    values = _settings(args, CorpusConfig, extra=SPLIT_SIZES)
    cfg = build(CorpusConfig, values)
    sizes = {k: int(values[k]) for k in SPLIT_SIZES}
    paths = make_corpus(cfg, sizes["n_train"], sizes["n_dev"], sizes["n_eval"],
                        sizes["eval_length_multiplier"], args.out)
    for split, path in paths.items():
        print(f"{split}: {path}")
    return EXIT_OK


def cmd_train(args):
    values = _settings(args, TrainConfig, GeneratorConfig)
    if args.steps is not None:
        values["pretrain_steps" if args.command == "pretrain" else "gan_steps"] = args.steps
    if args.command == "train" and args.mode is not None:
        values["mode"] = args.mode
    cfg = build(TrainConfig, values)
    gcfg = build(GeneratorConfig, values)
    corpus = _load_split(args.data, "train", gcfg)
    metrics = args.metrics or f"{args.out}.metrics.csv"
    if args.command == "pretrain":
        gen = Generator(gcfg, seed=cfg.seed)
        pretrain(cfg, gen, corpus, args.out, metrics, log=_log_report)
    else:
        gen = _load_generator(args.init, gcfg, seed=cfg.seed)
        train_gan(cfg, gen, corpus, args.out, metrics, log=_log_report)
    print(f"checkpoint: {args.out}\nmetrics: {metrics}")
    return EXIT_OK


def cmd_eval(args):
    values = _settings(args, GeneratorConfig, GarbleThresholds, extra=EVAL_KEYS)
    gcfg = build(GeneratorConfig, values)
    thresholds = build(GarbleThresholds, values)
    gen = _load_generator(args.ckpt, gcfg)
    utts = _load_split(args.data, "eval", gcfg)
    report = eval_model(GeneratorModel(gen), utts, int(values["eval_seed"]), thresholds)
    curve_csv = args.curve_csv or f"{os.path.splitext(args.out_csv)[0]}_curve.csv"
    write_report(report, args.out_csv, curve_csv, args.pgm_dir)
    first, second = report.curve_halves()
    print(f"utterances={len(report.utterances)} tf_mse={report.mean_tf_mse:.6g} "
          f"fr_mse={report.mean_fr_mse:.6g} garble_rate={report.garble_rate:.4f} "
          f"fr_error_first_half={first:.6g} fr_error_second_half={second:.6g}")
    return EXIT_OK


def cmd_gradcheck(args):
    from ..gantrain.gradsuite import DEFAULT_EPS, run_suite
    if args.seeds < 1:
        raise ConfigError("--seeds must be >= 1")
    worst, seconds = run_suite(range(args.seeds), eps=args.eps or DEFAULT_EPS)
    ok = True
    for name, err in worst.items():
        passed = err <= GRAD_TOLERANCE
        ok &= passed
        print(f"{name}: max_rel_err={err:.3e} {'ok' if passed else 'FAIL'}")
    print(f"seeds={args.seeds} seconds={seconds:.1f}")
    return EXIT_OK if ok else EXIT_NUMERIC


COMMANDS = {"gen-data": cmd_gen_data, "pretrain": cmd_train, "train": cmd_train,
            "eval": cmd_eval, "gradcheck": cmd_gradcheck}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericFailure, DegenerateWeight, OracleInvalid) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except StorageError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
