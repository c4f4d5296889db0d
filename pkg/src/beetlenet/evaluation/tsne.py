"""Exact t-SNE (O(N^2) per iteration)."""
from dataclasses import dataclass

import numpy as np

from .. import kernels


@dataclass
class Embedding2D:
    points: np.ndarray
    labels: np.ndarray
    kl_divergence: float
    kl_after_exaggeration: float


def conditional_probabilities(D, perplexity, tol=1e-10, max_iter=200):
    """Row-wise Gaussian affinities whose entropy matches log(perplexity).

    ``D`` holds squared distances. Returns ``(P_cond, betas)`` where beta is
    the precision 1/(2 sigma^2) found by bisection for each row.
    """
    n = D.shape[0]
    target = np.log(perplexity)
    P = np.zeros((n, n))
    betas = np.ones(n)
    for i in range(n):
        d = np.delete(D[i], i)
        d = d - d.min()
        beta, lo, hi = 1.0, 0.0, np.inf
        for _ in range(max_iter):
            w = np.exp(-d * beta)
            s = w.sum()
            H = np.log(s) + beta * np.dot(d, w) / s
            diff = H - target
            if abs(diff) < tol:
                break
            if diff > 0:
                lo = beta
                beta = beta * 2.0 if hi == np.inf else (beta + hi) / 2.0
            else:
                hi = beta
                beta = (beta + lo) / 2.0
        row = w / s
        P[i, :i] = row[:i]
        P[i, i + 1:] = row[i:]
        betas[i] = beta
    return P, betas


def row_perplexity(P_cond):
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(P_cond > 0, P_cond * np.log(P_cond), 0.0)
    return np.exp(-terms.sum(axis=1))


def joint_probabilities(X, perplexity):
    X = np.asarray(X, dtype=np.float64)
    D = kernels.sq_distances(X, X)
    Pc, _ = conditional_probabilities(D, perplexity)
    return (Pc + Pc.T) / (2.0 * X.shape[0])


def tsne_embed(features, perplexity=30.0, iterations=1000, seed=0, labels=None,
               learning_rate=200.0, exaggeration=12.0, exaggeration_iters=250):
    """Embed ``features`` (N x D) in 2-D.

    Gradient descent with momentum (0.5, then 0.8 after the exaggeration
    phase) and per-coordinate adaptive gains.
    """
    X = np.asarray(features, dtype=np.float64)
    n = X.shape[0]
    if perplexity <= 1.0:
        raise ValueError(f"perplexity must exceed 1, got {perplexity}")
    if n <= 3 * perplexity:
        raise ValueError(f"t-SNE needs more than 3*perplexity = {3 * perplexity:g} points, got {n}")
    P = joint_probabilities(X, perplexity)
    rng = np.random.default_rng(seed)
    Y = rng.normal(0.0, 1e-4, size=(n, 2))
    update = np.zeros_like(Y)
    gains = np.ones_like(Y)
    kl_mid = np.nan
    kl = np.nan
    for it in range(iterations):
        exaggerating = it < exaggeration_iters
        grad, kl = kernels.tsne_gradient(Y, P * exaggeration if exaggerating else P)
        if it == exaggeration_iters:
            kl_mid = kl
        momentum = 0.5 if exaggerating else 0.8
        same = (grad > 0) == (update > 0)
        gains = np.where(same, gains * 0.8, gains + 0.2)
        np.maximum(gains, 0.01, out=gains)
        update = momentum * update - learning_rate * gains * grad
        Y = Y + update
        Y -= Y.mean(axis=0)
    _, kl = kernels.tsne_gradient(Y, P)
    if np.isnan(kl_mid):
        kl_mid = kl
    lab = np.zeros(n, dtype=np.int64) if labels is None else np.asarray(labels)
    return Embedding2D(points=Y, labels=lab, kl_divergence=float(kl), kl_after_exaggeration=float(kl_mid))
