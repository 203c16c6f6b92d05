from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tape import Tensor, as_tensor, custom

EPS = 1e-7


@dataclass
class LossReport:
    total: float
    positive: float
    negative: float
    grad_norm: float = float("nan")


def _logit(p):
    return np.log(p) - np.log1p(-p)


def negative_weights(neg: np.ndarray, temperature: float | None) -> np.ndarray:
    """Uniform 1/n, or a softmax over ``temperature * logit(p)`` per row."""
    n = neg.shape[-1]
    if temperature is None:
        return np.full(neg.shape, 1.0 / n)
    z = temperature * _logit(np.clip(neg, EPS, 1 - EPS))
    z = z - z.max(axis=-1, keepdims=True)
    w = np.exp(z)
    return w / w.sum(axis=-1, keepdims=True)


def bce_terms(pos, neg, temperature: float | None = None):
    """Per-row positive and negative loss terms as plain arrays."""
    pos = np.clip(np.asarray(pos, dtype=np.float64), EPS, 1 - EPS)
    neg = np.asarray(neg, dtype=np.float64)
    w = negative_weights(neg, temperature)
    negc = np.clip(neg, EPS, 1 - EPS)
    return -np.log(pos), -(w * np.log1p(-negc)).sum(axis=-1)


def bce_loss(pos_score, neg_scores, adversarial_temperature: float | None = None):
    """Binary cross entropy of one positive against ``n`` negatives.

    ``-log p - sum_i w_i log(1 - p_i)`` with ``w_i = 1/n`` by default; a
    temperature switches to self-adversarial weights, which are treated as
    constants when differentiating. Scores are clamped to ``[eps, 1 - eps]``.

    Accepts plain arrays (returns a :class:`LossReport`) or tape tensors of
    shape ``(B,)`` and ``(B, n)`` (returns the batch-mean loss tensor and the
    report).
    """
    if not isinstance(pos_score, Tensor) and not isinstance(neg_scores, Tensor):
        p, n = bce_terms(np.atleast_1d(pos_score), np.atleast_2d(neg_scores), adversarial_temperature)
        return LossReport(float((p + n).mean()), float(p.mean()), float(n.mean()))

    pos_t, neg_t = as_tensor(pos_score), as_tensor(neg_scores)
    pos = pos_t.value.reshape(-1)
    neg = neg_t.value.reshape(len(pos), -1)
    w = negative_weights(neg, adversarial_temperature)
    pc = np.clip(pos, EPS, 1 - EPS)
    nc = np.clip(neg, EPS, 1 - EPS)
    p_terms = -np.log(pc)
    n_terms = -(w * np.log1p(-nc)).sum(axis=-1)
    batch = len(pos)
    value = np.array((p_terms + n_terms).mean())
    pos_inside = (pos > EPS) & (pos < 1 - EPS)
    neg_inside = (neg > EPS) & (neg < 1 - EPS)

    def back(g):
        gp = g * (-1.0 / pc) * pos_inside / batch
        gn = g * (w / (1.0 - nc)) * neg_inside / batch
        return gp.reshape(pos_t.shape), gn.reshape(neg_t.shape)

    out = custom(value, (pos_t, neg_t), back)
    return out, LossReport(float(value), float(p_terms.mean()), float(n_terms.mean()))
