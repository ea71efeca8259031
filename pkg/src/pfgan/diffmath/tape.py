"""Reverse-mode tape over numpy float64 arrays."""
import numpy as np

from ..errors import ConfigError, NumericFailure

_ACTIVE = []


def active_tape():
    return _ACTIVE[-1] if _ACTIVE else None


class Param:
    """Named trainable (or buffer) array with a gradient accumulator."""

    __slots__ = ("name", "value", "grad", "trainable")

    def __init__(self, name, value, trainable=True):
        self.name = name
        self.value = np.array(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self.trainable = trainable

    @property
    def shape(self):
        return self.value.shape

    def var(self):
        """Graph handle: a tracked leaf under an active tape, else a constant."""
        tape = active_tape()
        if tape is None or not self.trainable:
            return Var(self.value)
        return tape.leaf(self)

    def __repr__(self):
        return f"Param({self.name!r}, shape={self.value.shape})"


class ParamStore:
    """Ordered collection of uniquely named parameters."""

    def __init__(self):
        self._params = {}

    def add(self, name, value, trainable=True):
        if name in self._params:
            raise ConfigError(f"duplicate parameter name {name!r}")
        p = Param(name, value, trainable)
        self._params[name] = p
        return p

    @classmethod
    def union(cls, *stores):
        """A store sharing the Param objects of several stores (names must not clash)."""
        out = cls()
        for store in stores:
            for p in store:
                if p.name in out._params:
                    raise ConfigError(f"duplicate parameter name {p.name!r}")
                out._params[p.name] = p
        return out

    def __getitem__(self, name):
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __iter__(self):
        return iter(self._params.values())

    def __len__(self):
        return len(self._params)

    def names(self):
        return list(self._params)

    def trainable(self):
        return [p for p in self._params.values() if p.trainable]

    def zero_grad(self):
        for p in self._params.values():
            p.grad[...] = 0.0

    def state(self):
        return {n: p.value.copy() for n, p in self._params.items()}

    def load_state(self, values, strict=True):
        for name, p in self._params.items():
            if name not in values:
                if strict:
                    raise ConfigError(f"missing tensor {name!r}")
                continue
            v = np.asarray(values[name], dtype=np.float64)
            if v.shape != p.value.shape:
                raise ConfigError(
                    f"tensor {name!r} has shape {v.shape}, expected {p.value.shape}")
            p.value[...] = v


class Var:
    """A node in the computation graph."""

    __slots__ = ("value", "grad", "parents", "backward_fn", "op", "needs_grad", "aux")

    def __init__(self, value, parents=(), backward_fn=None, op="const", needs_grad=False):
        self.value = value
        self.grad = None
        self.parents = parents
        self.backward_fn = backward_fn
        self.op = op
        self.needs_grad = needs_grad
        self.aux = None

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var(op={self.op}, shape={self.value.shape})"


class Tape:
    """Records operations while active; ``backward`` fills parameter grads."""

    def __init__(self):
        self.nodes = []
        self._leaves = {}

    def __enter__(self):
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc):
        _ACTIVE.remove(self)
        return False

    def leaf(self, param):
        v = self._leaves.get(id(param))
        if v is None:
            v = Var(param.value, op=f"param:{param.name}", needs_grad=True)
            v.aux = param
            self._leaves[id(param)] = v
        return v

    def backward(self, loss):
        if loss.value.size != 1:
            raise ConfigError("backward needs a scalar loss")
        loss.grad = np.ones_like(loss.value)
        for node in reversed(self.nodes):
            g = node.grad
            if g is None:
                continue
            grads = node.backward_fn(g)
            for parent, pg in zip(node.parents, grads):
                if pg is None or not parent.needs_grad:
                    continue
                if parent.grad is None:
                    parent.grad = pg
                else:
                    parent.grad = parent.grad + pg
        for leaf in self._leaves.values():
            if leaf.grad is not None:
                leaf.aux.grad += leaf.grad
        # free intermediates, the tape is single-use
        self.nodes = []


def lift(x):
    if isinstance(x, Var):
        return x
    return Var(np.asarray(x, dtype=np.float64))


def record(value, parents, backward_fn, op):
    """Wrap an op result, checking finiteness and registering it on the tape."""
    if not np.isfinite(value).all():
        raise NumericFailure(op)
    tape = active_tape()
    needs = tape is not None and any(p.needs_grad for p in parents)
    out = Var(value, parents, backward_fn, op, needs)
    if needs:
        tape.nodes.append(out)
    return out
