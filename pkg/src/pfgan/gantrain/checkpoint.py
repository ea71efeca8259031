"""Binary checkpoint files.

Layout (little-endian): ``b"PFCK"``, u32 version, u32 tensor count, then
per tensor a u16 name length, the UTF-8 name, a u8 rank, u32 dims and
float64 values.  A presence byte follows; when it is 1, a u32 count of
optimizer states comes next, each with a u16-prefixed name, u64 step,
f64 beta1/beta2/eps and a tensor block holding ``m:<param>`` and
``v:<param>`` moments in the same tensor format.
"""
import os
import struct
from typing import NamedTuple, Optional

import numpy as np

from ..diffmath import AdamState
from ..errors import BadMagic, StorageError, Truncated, VersionMismatch

MAGIC = b"PFCK"
VERSION = 1


class Checkpoint(NamedTuple):
    tensors: dict
    optimizers: Optional[dict]


def _pack_tensors(out, tensors):
    out.append(struct.pack("<I", len(tensors)))
    for name, value in tensors.items():
        value = np.asarray(value, dtype="<f8")
        raw = name.encode("utf-8")
        out.append(struct.pack("<H", len(raw)) + raw)
        out.append(struct.pack("<B", value.ndim))
        out.append(struct.pack(f"<{value.ndim}I", *value.shape))
        out.append(value.tobytes())


def encode_checkpoint(tensors, optimizers=None):
    if hasattr(tensors, "state"):
        tensors = tensors.state()
    out = [MAGIC, struct.pack("<I", VERSION)]
    _pack_tensors(out, tensors)
    if not optimizers:
        out.append(b"\x00")
        return b"".join(out)
    out.append(b"\x01" + struct.pack("<I", len(optimizers)))
    for name, st in optimizers.items():
        raw = name.encode("utf-8")
        out.append(struct.pack("<H", len(raw)) + raw)
        out.append(struct.pack("<Q3d", st.step, st.beta1, st.beta2, st.eps))
        moments = {f"m:{k}": v for k, v in st.m.items()}
        moments.update({f"v:{k}": v for k, v in st.v.items()})
        _pack_tensors(out, moments)
    return b"".join(out)


def save_checkpoint(params, optimizers, path):
    """Atomically write ``params`` (a ParamStore or name->array mapping).

    ``optimizers`` is ``None`` or a mapping of name -> AdamState.
    """
    data = encode_checkpoint(params, optimizers)
    tmp = f"{path}.tmp"
    try:
        with open(tmp, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except OSError as exc:
        raise StorageError(f"cannot write checkpoint {path}: {exc}") from exc


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.data):
            raise Truncated(what)
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

    def tensors(self, section):
        (count,) = self.unpack("<I", f"{section} tensor count")
        out = {}
        for i in range(count):
            (n,) = self.unpack("<H", f"{section} tensor #{i} name")
            try:
                name = self.take(n, f"{section} tensor #{i} name").decode("utf-8")
            except UnicodeDecodeError as exc:
                raise StorageError(f"checkpoint tensor #{i} has a malformed name") from exc
            (rank,) = self.unpack("<B", f"tensor {name!r}")
            dims = self.unpack(f"<{rank}I", f"tensor {name!r}")
            size = int(np.prod(dims, dtype=np.int64))
            raw = self.take(8 * size, f"tensor {name!r}")
            out[name] = np.frombuffer(raw, dtype="<f8").reshape(dims).astype(np.float64)
        return out


def decode_checkpoint(data):
    r = _Reader(data)
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagic("not a checkpoint file (bad magic)")
    r.pos = 4
    (version,) = r.unpack("<I", "version")
    if version != VERSION:
        raise VersionMismatch(f"checkpoint version {version}, this build reads {VERSION}")
    tensors = r.tensors("model")
    (flag,) = r.unpack("<B", "optimizer presence flag")
    if flag not in (0, 1):
        raise StorageError(f"bad optimizer presence flag {flag}")
    optimizers = {} if flag else None
    (n_opt,) = r.unpack("<I", "optimizer count") if flag else (0,)
    for i in range(n_opt):
        (n,) = r.unpack("<H", f"optimizer #{i} name")
        name = r.take(n, f"optimizer #{i} name").decode("utf-8", errors="replace")
        step, b1, b2, eps = r.unpack("<Q3d", f"optimizer {name!r} header")
        moments = r.tensors(f"optimizer {name!r}")
        st = AdamState(beta1=b1, beta2=b2, eps=eps, step=step)
        for key, value in moments.items():
            kind, _, pname = key.partition(":")
            if kind not in ("m", "v") or not pname:
                raise StorageError(f"unexpected optimizer tensor {key!r}")
            getattr(st, kind)[pname] = value
        optimizers[name] = st
    if r.pos != len(data):
        raise StorageError(f"{len(data) - r.pos} trailing bytes after checkpoint payload")
    return Checkpoint(tensors, optimizers)


def load_checkpoint(path):
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise StorageError(f"cannot read checkpoint {path}: {exc}") from exc
    return decode_checkpoint(data)
