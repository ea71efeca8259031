"""Evaluation harness, image output, config files and the command line."""
from .diagnostics import GarbleThresholds, alignment_diagnostics, focus_positions
from .evaluate import (CURVE_HEADER, UTTERANCE_HEADER, EvalReport, GeneratorModel,
                       UtteranceResult, eval_model, write_report)
from .pgm import emit_alignment_pgm, emit_spectrogram_pgm, read_pgm, to_pixels, write_pgm

__all__ = [
    "GarbleThresholds", "alignment_diagnostics", "focus_positions", "CURVE_HEADER",
    "UTTERANCE_HEADER", "EvalReport", "GeneratorModel", "UtteranceResult", "eval_model",
    "write_report", "emit_alignment_pgm", "emit_spectrogram_pgm", "read_pgm", "to_pixels",
    "write_pgm",
]
