"""Analytic gradients via the tape and a central-difference oracle."""
import numpy as np

from ..errors import OracleInvalid
from .tape import Tape


def forward_backward(loss_fn, params):
    """Run ``loss_fn`` under a fresh tape and backpropagate.

    ``loss_fn`` takes no arguments and returns a scalar Var built from
    ``Param.var()`` handles.  Returns ``(loss, {name: grad copy})``.
    """
    params.zero_grad()
    with Tape() as tape:
        loss = loss_fn()
    tape.backward(loss)
    grads = {p.name: p.grad.copy() for p in params.trainable()}
    return float(loss.value), grads


def _evaluate(loss_fn):
    return float(loss_fn().value)


def grad_check(loss_fn, params, eps=1e-5, max_components=None, rng=None, names=None):
    """Maximum relative error between analytic and central-difference grads.

    Relative error per component is ``|a-n| / max(|a|, |n|, 1e-8)``.  With
    ``max_components`` set, a random subset of that many components (drawn
    from ``rng``) is probed instead of all of them.
    """
    _, analytic = forward_backward(loss_fn, params)
    params.zero_grad()
    base = _evaluate(loss_fn)
    if _evaluate(loss_fn) != base:
        raise OracleInvalid("loss_fn returned different values for identical parameters")

    targets = [p for p in params.trainable() if names is None or p.name in names]
    slots = [(p, i) for p in targets for i in range(p.value.size)]
    if max_components is not None and max_components < len(slots):
        rng = rng if rng is not None else np.random.default_rng(0)
        pick = rng.choice(len(slots), size=max_components, replace=False)
        slots = [slots[k] for k in sorted(pick)]

    worst = 0.0
    for p, i in slots:
        flat = p.value.reshape(-1)
        keep = flat[i]
        flat[i] = keep + eps
        up = _evaluate(loss_fn)
        flat[i] = keep - eps
        down = _evaluate(loss_fn)
        flat[i] = keep
        num = (up - down) / (2.0 * eps)
        ana = analytic[p.name].reshape(-1)[i]
        err = abs(ana - num) / max(abs(ana), abs(num), 1e-8)
        worst = max(worst, err)
    return worst
