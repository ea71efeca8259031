"""Teacher-forced vs free-running evaluation of a model on a corpus split."""
import csv
import os
from dataclasses import dataclass, field
from typing import List

import numpy as np

from ..errors import ConfigError, InputError, StorageError
from ..generator import FREE_RUNNING, TEACHER_FORCING, DropoutMasks, make_batch
from .diagnostics import GarbleThresholds, alignment_diagnostics
from .pgm import emit_alignment_pgm, emit_spectrogram_pgm

UTTERANCE_HEADER = ["id", "n_symbols", "T", "tf_mse", "fr_mse", "monotonicity_violations",
                    "attention_entropy", "garbled"]
CURVE_HEADER = ["position", "mean_fr_abs_error", "count"]


@dataclass
class UtteranceResult:
    id: str
    n_symbols: int
    T: int
    tf_mse: float
    fr_mse: float
    monotonicity_violations: int
    attention_entropy: float
    garbled: bool


@dataclass
class EvalReport:
    utterances: List[UtteranceResult]
    curve: np.ndarray         # mean |FR error| per position
    curve_count: np.ndarray   # utterances contributing to each position
    fr_frames: dict = field(default_factory=dict, repr=False)
    alignments: dict = field(default_factory=dict, repr=False)

    @property
    def mean_tf_mse(self):
        return float(np.mean([u.tf_mse for u in self.utterances]))

    @property
    def mean_fr_mse(self):
        return float(np.mean([u.fr_mse for u in self.utterances]))

    @property
    def garble_rate(self):
        return sum(u.garbled for u in self.utterances) / len(self.utterances)

    def curve_halves(self):
        """Mean curve value over positions ``<= T/2`` and ``> T/2`` (T = curve length)."""
        n = len(self.curve)
        half = n // 2
        return float(self.curve[:half].mean()), float(self.curve[half:].mean())


class GeneratorModel:
    """Adapter decoding one utterance at a time with seeded inference dropout."""

    def __init__(self, generator):
        self.gen = generator

    def decode(self, utt, seed):
        c = self.gen.config
        if utt.frames.shape[1] != c.frame_dim:
            raise ConfigError(f"utterance {utt.id} has frame dim {utt.frames.shape[1]}, "
                              f"model expects {c.frame_dim}")
        batch = make_batch([utt])
        masks = DropoutMasks.draw(np.random.default_rng(seed), utt.T, 1, c.prenet_dims,
                                  c.prenet_dropout)
        tf = self.gen.run_batch(batch, TEACHER_FORCING, masks=masks)
        fr = self.gen.run_batch(batch, FREE_RUNNING, masks=masks, T=utt.T)
        n = len(utt.symbols)
        return tf.predicted.value[0], fr.predicted.value[0], fr.alignment[0, :, :n]


def eval_model(model, utterances, eval_seed=0, thresholds=GarbleThresholds()):
    """Per-utterance errors, alignment diagnostics and the FR error curve.

    ``model.decode(utt, seed)`` returns ``(tf_frames, fr_frames, fr_alignment)``.
    Utterances are processed in id order; each gets its own dropout seed.
    """
    utts = sorted(utterances, key=lambda u: u.id)
    if not utts:
        raise InputError("cannot evaluate an empty split")
    max_t = max(u.T for u in utts)
    err_sum = np.zeros(max_t)
    count = np.zeros(max_t, dtype=np.int64)
    rows, fr_frames, aligns = [], {}, {}
    for i, u in enumerate(utts):
        seed = np.random.SeedSequence([int(eval_seed), i])
        tf, fr, align = model.decode(u, seed)
        if tf.shape != u.frames.shape or fr.shape != u.frames.shape:
            raise ConfigError(f"model output shape mismatch for {u.id}")
        v, ent, garbled = alignment_diagnostics(align, thresholds)
        rows.append(UtteranceResult(u.id, len(u.symbols), u.T,
                                    float(np.mean((tf - u.frames) ** 2)),
                                    float(np.mean((fr - u.frames) ** 2)), v, ent, garbled))
        err_sum[:u.T] += np.abs(fr - u.frames).mean(axis=1)
        count[:u.T] += 1
        fr_frames[u.id] = fr
        aligns[u.id] = align
    return EvalReport(rows, err_sum / count, count, fr_frames, aligns)


def _fmt(v):
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_csv(path, header, rows):
    tmp = f"{path}.tmp"
    try:
        with open(tmp, "w", newline="", encoding="ascii") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
        os.replace(tmp, path)
    except OSError as exc:
        raise StorageError(f"cannot write {path}: {exc}") from exc


def write_report(report, utterance_csv, curve_csv, pgm_dir=None):
    _write_csv(utterance_csv, UTTERANCE_HEADER,
               [[_fmt(getattr(r, h)) for h in UTTERANCE_HEADER] for r in report.utterances])
    _write_csv(curve_csv, CURVE_HEADER,
               [[str(p), _fmt(float(e)), str(int(c))]
                for p, (e, c) in enumerate(zip(report.curve, report.curve_count))])
    if pgm_dir:
        try:
            os.makedirs(pgm_dir, exist_ok=True)
        except OSError as exc:
            raise StorageError(f"cannot create {pgm_dir}: {exc}") from exc
        for uid, frames in report.fr_frames.items():
            emit_spectrogram_pgm(frames, os.path.join(pgm_dir, f"{uid}.frames.pgm"))
            emit_alignment_pgm(report.alignments[uid], os.path.join(pgm_dir, f"{uid}.align.pgm"))
