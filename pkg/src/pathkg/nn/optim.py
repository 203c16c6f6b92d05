from __future__ import annotations

import numpy as np

from .params import ParameterStore


def adam_step(store: ParameterStore, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One bias-corrected Adam update over every array, then zero the grads."""
    store.step += 1
    t = store.step
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for name, param in store.arrays.items():
        g = store.grads[name]
        m, v = store.moments[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        if lr:
            param -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    store.zero_grad()
