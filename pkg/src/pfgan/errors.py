"""Exception hierarchy shared by every module.

The CLI maps each family onto an exit code: configuration and input
problems exit 1, numeric failures exit 2, storage problems exit 3.
"""


class PfganError(Exception):
    """Base class for all errors raised by the package."""


class ConfigError(PfganError):
    """Inconsistent dimensions, bad hyperparameters or malformed config."""


class InputError(PfganError):
    """Caller supplied data that violates an operation's preconditions."""


class NumericFailure(PfganError):
    """A NaN or Inf showed up at an operation boundary."""

    def __init__(self, node, detail=""):
        self.node = node
        msg = f"non-finite value produced by '{node}'"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class OracleInvalid(PfganError):
    """Finite-difference oracle cannot be trusted (loss is not deterministic)."""


class DegenerateWeight(PfganError):
    """Spectral normalization requested for a (numerically) zero matrix."""


class StorageError(PfganError):
    """Reading or writing corpus, checkpoint, CSV or image files failed."""


class CheckpointError(StorageError):
    pass


class BadMagic(CheckpointError):
    pass


class VersionMismatch(CheckpointError):
    pass


class Truncated(CheckpointError):
    def __init__(self, what):
        self.what = what
        super().__init__(f"checkpoint truncated while reading {what}")
