"""One-vs-rest kernel SVM trained with SMO (second-order working-set
selection, full precomputed Gram matrix, no shrinking)."""
from dataclasses import dataclass, field

import numpy as np

from .. import kernels
from ..data import NUM_CLASSES

KKT_TOL = 1e-3
MAX_ITER = 1_000_000


class SVMConvergenceError(RuntimeError):
    def __init__(self, message, diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class Kernel:
    kind: str = "linear"
    gamma: float = 0.0

    def __post_init__(self):
        if self.kind not in ("linear", "rbf"):
            raise ValueError(f"kernel must be 'linear' or 'rbf', got {self.kind!r}")
        if self.kind == "rbf" and self.gamma <= 0:
            raise ValueError("rbf kernel needs gamma > 0")

    def gram(self, A, B):
        if self.kind == "linear":
            return A @ B.T
        return np.exp(-self.gamma * kernels.sq_distances(A, B))

    def __str__(self):
        return "linear" if self.kind == "linear" else f"rbf(gamma={self.gamma:g})"


@dataclass
class BinarySVM:
    support_vectors: np.ndarray
    coef: np.ndarray          # alpha_i * y_i of the support vectors
    rho: float
    kernel: Kernel
    alpha: np.ndarray         # full dual vector, training order
    iterations: int
    gap: float

    def decision(self, X):
        if len(self.coef) == 0:
            return np.full(len(X), -self.rho)
        return self.kernel.gram(np.atleast_2d(X), self.support_vectors) @ self.coef - self.rho


@dataclass
class SVMModel:
    classes: list
    machines: dict = field(default_factory=dict)

    def decision(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        out = np.full((len(X), NUM_CLASSES), -np.inf)
        for c, m in self.machines.items():
            out[:, c] = m.decision(X)
        return out


def _rho(alpha, G, y, C):
    yG = y * G
    upper = alpha >= C
    lower = alpha <= 0
    free = ~upper & ~lower
    if free.any():
        return float(np.mean(yG[free]))
    ub_mask = (upper & (y < 0)) | (lower & (y > 0))
    lb_mask = (upper & (y > 0)) | (lower & (y < 0))
    ub = yG[ub_mask].min() if ub_mask.any() else np.inf
    lb = yG[lb_mask].max() if lb_mask.any() else -np.inf
    return float((ub + lb) / 2.0)


def fit_binary(X, y, C, kernel, tol=KKT_TOL, max_iter=MAX_ITER):
    """Solve the C-SVM dual for labels in {-1, +1}."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    K = np.ascontiguousarray(kernel.gram(X, X))
    alpha, G, iters, gap = kernels.smo_solve(K, y, float(C), float(tol), int(max_iter))
    if gap >= tol:
        raise SVMConvergenceError(
            f"SMO did not reach KKT tolerance {tol} within {max_iter} iterations (gap {gap:.3g})",
            {"iterations": int(iters), "gap": float(gap), "alpha": alpha})
    sv = alpha > 0
    return BinarySVM(support_vectors=X[sv], coef=(alpha * y)[sv], rho=_rho(alpha, G, y, C),
                     kernel=kernel, alpha=alpha, iterations=int(iters), gap=float(gap))


def kkt_residuals(machine, X, y, C):
    """Per-sample violation of the KKT conditions of a fitted machine."""
    yf = np.asarray(y, dtype=np.float64) * machine.decision(X)
    a = machine.alpha
    res = np.where(a <= 0, np.maximum(0.0, 1.0 - yf),
                   np.where(a >= C, np.maximum(0.0, yf - 1.0), np.abs(yf - 1.0)))
    return res


def svm_fit(X, labels, C=1.0, kernel=Kernel(), tol=KKT_TOL, max_iter=MAX_ITER):
    labels = np.asarray(labels, dtype=np.int64)
    classes = sorted(set(labels.tolist()))
    if len(classes) < 2:
        raise ValueError("SVM needs at least two classes")
    model = SVMModel(classes=classes)
    for c in classes:
        model.machines[c] = fit_binary(X, np.where(labels == c, 1.0, -1.0), C, kernel, tol, max_iter)
    return model


def svm_predict(model, X):
    """Class with the largest one-vs-rest decision value (lowest ordinal on ties)."""
    return np.argmax(model.decision(X), axis=1)
