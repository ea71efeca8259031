"""Binary greyscale (P5) images of frame matrices and alignments.

Time runs left to right; channel (or encoder position) 0 is the bottom row.
"""
import os

import numpy as np

from ..errors import InputError, StorageError


def to_pixels(values):
    """``round(clamp(v, 0, 1) * 255)`` with halves rounded away from zero."""
    v = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    return np.floor(v * 255.0 + 0.5).astype(np.uint8)


def write_pgm(matrix, path):
    """Write a ``(T, H)`` matrix as an image ``T`` wide and ``H`` tall."""
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2 or m.size == 0:
        raise InputError("image data must be a non-empty 2-D matrix")
    T, H = m.shape
    pixels = to_pixels(m).T[::-1]
    header = f"P5\n{T} {H}\n255\n".encode("ascii")
    tmp = f"{path}.tmp"
    try:
        with open(tmp, "wb") as fh:
            fh.write(header + np.ascontiguousarray(pixels).tobytes())
        os.replace(tmp, path)
    except OSError as exc:
        raise StorageError(f"cannot write image {path}: {exc}") from exc


def emit_spectrogram_pgm(frames, path):
    write_pgm(frames, path)


def emit_alignment_pgm(alignment, path):
    write_pgm(alignment, path)


def read_pgm(path):
    """Pixels back in ``(T, H)`` orientation as uint8."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise StorageError(f"cannot read image {path}: {exc}") from exc
    parts = data.split(b"\n", 3)
    if len(parts) != 4 or parts[0] != b"P5" or parts[2] != b"255":
        raise StorageError(f"{path}: unsupported PGM header")
    T, H = (int(t) for t in parts[1].split())
    body = parts[3]
    if len(body) != T * H:
        raise StorageError(f"{path}: expected {T * H} pixel bytes, found {len(body)}")
    return np.frombuffer(body, dtype=np.uint8).reshape(H, T)[::-1].T.copy()
