from dataclasses import dataclass

import numpy as np

LOG_EPS = 1e-12


@dataclass(frozen=True)
class FocalLossParams:
    alpha: float = 0.25
    gamma: float = 2.0

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")


def softmax(logits):
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def focal_loss_per_sample(logits, labels, params=FocalLossParams()):
    p = softmax(logits)
    pt = p[np.arange(len(labels)), np.asarray(labels)]
    return -params.alpha * (1.0 - pt) ** params.gamma * np.log(np.maximum(pt, LOG_EPS))


def focal_loss(logits, labels, params=FocalLossParams(), with_grad=False):
    """Mean softmax focal loss -alpha (1 - p_t)^gamma log p_t over the batch.

    With ``with_grad`` also returns d(loss)/d(logits).
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.shape[0] != labels.shape[0]:
        raise ValueError(f"batch size mismatch: {logits.shape[0]} logits vs {labels.shape[0]} labels")
    n = len(labels)
    p = softmax(logits)
    rows = np.arange(n)
    pt = p[rows, labels]
    safe = np.maximum(pt, LOG_EPS)
    a, gm = params.alpha, params.gamma
    one_m = 1.0 - pt
    loss = float(np.mean(-a * one_m ** gm * np.log(safe)))
    if not with_grad:
        return loss
    # dL/dpt, then chain through dpt/dz_j = pt (1[j=y] - p_j)
    if gm == 0:
        focus_term = np.zeros(n)
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            focus_term = np.where(one_m > 0, gm * one_m ** (gm - 1.0) * np.log(safe), 0.0)
    dl_dpt = -a * (-focus_term + one_m ** gm / safe)
    onehot = np.zeros_like(p)
    onehot[rows, labels] = 1.0
    grad = (dl_dpt * pt)[:, None] * (onehot - p) / n
    return loss, grad


def cross_entropy(logits, labels):
    p = softmax(logits)
    return float(np.mean(-np.log(np.maximum(p[np.arange(len(labels)), labels], LOG_EPS))))


def predict(logits):
    """Argmax class per row; ties go to the lowest ordinal."""
    return np.argmax(np.atleast_2d(logits), axis=1)
