"""Adam with bias correction and the warmup-then-linear-decay schedule."""

import numpy as np

from ..errors import ConfigurationError


class AdamState:
    """Per-parameter first/second moment buffers keyed by parameter name."""

    def __init__(self):
        self.step = 0
        self.m = {}
        self.v = {}

    def slot(self, param):
        if param.name not in self.m:
            self.m[param.name] = np.zeros_like(param.data)
            self.v[param.name] = np.zeros_like(param.data)
        return self.m[param.name], self.v[param.name]


def adam_step(params, state, lr, betas=(0.9, 0.999), eps=1e-8):
    """One Adam update over ``params`` using their accumulated ``.grad``.

    Parameters without a gradient are left untouched.  Call
    ``zero_grads(params)`` afterwards unless accumulating.
    """
    b1, b2 = betas
    state.step += 1
    t = state.step
    corr1 = 1.0 - b1 ** t
    corr2 = 1.0 - b2 ** t
    for p in params:
        if p.grad is None:
            continue
        g = p.grad
        m, v = state.slot(p)
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        update = (m / corr1) / (np.sqrt(v / corr2) + eps)
        p.data = p.data - lr * update.astype(p.data.dtype)


def zero_grads(params):
    for p in params:
        p.grad = None


def lr_schedule(step, warmup, total, peak):
    """Linear ramp 0 -> peak over ``warmup`` steps, then linear decay to 0 at ``total``."""
    if warmup > total:
        raise ConfigurationError([f"warmup={warmup} exceeds total={total}"])
    if not (0 <= step <= total):
        raise ConfigurationError([f"step={step} outside [0, {total}]"])
    if step < warmup:
        return peak * step / warmup if warmup > 0 else peak
    if total == warmup:
        return peak if step == warmup else 0.0
    return peak * (total - step) / (total - warmup)
