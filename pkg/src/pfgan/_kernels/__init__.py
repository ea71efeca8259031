"""Hot recurrent kernels with a compiled backend and a numpy fallback.

The compiled module is used when it imports; set ``PFGAN_KERNELS=numpy``
to force the fallback.  ``BACKEND`` names the active implementation.
"""
import os

from . import _numpy_kernels as numpy_backend
from ._types import DecoderWeights

try:
    from . import _ckernels as compiled_backend
except ImportError:  # extension not built
    compiled_backend = None

if compiled_backend is not None and os.environ.get("PFGAN_KERNELS", "") != "numpy":
    _active = compiled_backend
    BACKEND = "compiled"
else:
    _active = numpy_backend
    BACKEND = "numpy"

gru_forward = _active.gru_forward
gru_backward = _active.gru_backward
attention_forward = _active.attention_forward
attention_backward = _active.attention_backward
decoder_forward = _active.decoder_forward
decoder_backward = _active.decoder_backward


def backends():
    """Available kernel modules keyed by name (for benchmarks and tests)."""
    found = {"numpy": numpy_backend}
    if compiled_backend is not None:
        found["compiled"] = compiled_backend
    return found
