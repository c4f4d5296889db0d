"""Per-flight training: AdamW, focal loss and validation early stopping."""
from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .network import FocalLossParams, build_network, focal_loss, forward, predict, prepare_batch

log = logging.getLogger(__name__)

IMPROVEMENT_DELTA = 1e-6


class DivergenceError(RuntimeError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 2
    learning_rate: float = 1e-4
    weight_decay: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    early_stop_patience: int = 10
    seed: int = 0
    focal_alpha: float = 0.25
    focal_gamma: float = 2.0
    eval_batch_size: int = 32

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("betas must lie strictly between 0 and 1")
        if self.early_stop_patience < 0:
            raise ValueError("early_stop_patience must be >= 0")

    @property
    def focal(self):
        return FocalLossParams(self.focal_alpha, self.focal_gamma)


# ----------------------------------------------------------------- AdamW ----

@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0


def adamw_step(store, grads, config, state):
    """One AdamW update, in place.

    Decoupled weight decay shrinks each parameter by ``1 - lr*wd`` before the
    bias-corrected moment step. Only trainable parameters are touched.
    """
    for name, g in grads.items():
        if g.shape != store.shape(name):
            raise ValueError(f"gradient shape {g.shape} does not match parameter {name} {store.shape(name)}")
    state.step += 1
    t = state.step
    lr, wd = config.learning_rate, config.weight_decay
    b1, b2 = config.beta1, config.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name in store.trainable_names():
        p = store[name]
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p)
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        if wd:
            p *= 1.0 - lr * wd
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + config.epsilon)
    return store, state


# -------------------------------------------------------- early stopping ----

@dataclass
class EarlyStopState:
    patience: int
    best_metric: float = float("inf")
    best_epoch: int = 0
    epochs_since_improvement: int = 0
    best_parameters: object = None
    epoch: int = 0


def early_stop_update(state, val_loss, store=None):
    """Record one epoch's validation loss; return True when training should
    stop. Improvement means beating the best by more than 1e-6; training
    stops once the count of non-improving epochs exceeds the patience."""
    if not np.isfinite(val_loss):
        raise ValueError("validation metric must be finite")
    state.epoch += 1
    if val_loss < state.best_metric - IMPROVEMENT_DELTA:
        state.best_metric = float(val_loss)
        state.best_epoch = state.epoch
        state.epochs_since_improvement = 0
        if store is not None:
            state.best_parameters = store.copy()
        return False
    state.epochs_since_improvement += 1
    return state.epochs_since_improvement > state.patience


# -------------------------------------------------------------- training ----

@dataclass
class TrainReport:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    val_accuracy: list = field(default_factory=list)
    stopped_epoch: int = 0
    best_epoch: int = 0
    early_stopped: bool = False
    wall_time: float = 0.0
    seed: int = 0
    config: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)

    def write(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


def evaluate_arrays(store, X, y, net_config, train_config):
    """Mean focal loss, accuracy and predictions over prepared inputs."""
    if len(X) == 0:
        return float("nan"), float("nan"), np.zeros(0, dtype=np.int64)
    logits = np.concatenate([forward(store, X[i:i + train_config.eval_batch_size], net_config)[0]
                             for i in range(0, len(X), train_config.eval_batch_size)])
    loss = focal_loss(logits, y, train_config.focal)
    pred = predict(logits)
    return loss, float(np.mean(pred == y)), pred


def _labels(patches):
    return np.array([int(p.stage) for p in patches], dtype=np.int64)


def train_flight_model(split, net_config, train_config, stats, init_store=None, dtype=np.float32):
    """Train one model on ``split.train`` and return the best-validation
    snapshot with its :class:`TrainReport`.

    Epoch ``e`` shuffles with ``default_rng(seed + e)``. If the split has no
    validation samples the training loss drives early stopping instead.
    Raises :class:`DivergenceError` on a non-finite loss.
    """
    if not split.train:
        raise ValueError("training split is empty")
    t0 = time.perf_counter()
    store = init_store.copy() if init_store is not None else build_network(net_config, seed=train_config.seed)
    store = store.astype(dtype)
    Xtr = prepare_batch(split.train, stats, net_config.input_side).astype(dtype)
    ytr = _labels(split.train)
    Xva = prepare_batch(split.val, stats, net_config.input_side).astype(dtype)
    yva = _labels(split.val)
    report = TrainReport(seed=train_config.seed,
                         config={"train": asdict(train_config), "network": net_config.to_dict()})
    adam = AdamState()
    stopper = EarlyStopState(patience=train_config.early_stop_patience)
    n = len(ytr)
    bs = train_config.batch_size
    for epoch in range(1, train_config.epochs + 1):
        order = np.random.default_rng(train_config.seed + epoch).permutation(n)
        total = 0.0
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            logits, graph, node = forward(store, Xtr[idx], net_config, record=True)
            loss, dlogits = focal_loss(logits, ytr[idx], train_config.focal, with_grad=True)
            if not np.isfinite(loss):
                report.stopped_epoch = epoch
                report.wall_time = time.perf_counter() - t0
                raise DivergenceError(f"non-finite training loss at epoch {epoch}", report)
            grads = graph.backward(node, dlogits.astype(dtype))
            adamw_step(store, grads, train_config, adam)
            total += loss * len(idx)
        train_loss = total / n
        val_loss, val_acc, _ = evaluate_arrays(store, Xva, yva, net_config, train_config)
        if not len(yva):
            val_loss = train_loss
        if not np.isfinite(val_loss):
            report.stopped_epoch = epoch
            report.wall_time = time.perf_counter() - t0
            raise DivergenceError(f"non-finite validation loss at epoch {epoch}", report)
        report.train_loss.append(float(train_loss))
        report.val_loss.append(float(val_loss))
        report.val_accuracy.append(float(val_acc))
        log.info("epoch %d train_loss %.5f val_loss %.5f val_acc %.4f", epoch, train_loss, val_loss, val_acc)
        stop = early_stop_update(stopper, val_loss, store)
        report.stopped_epoch = epoch
        if stop:
            report.early_stopped = True
            break
    report.best_epoch = stopper.best_epoch
    report.wall_time = time.perf_counter() - t0
    best = stopper.best_parameters if stopper.best_parameters is not None else store
    return best, report
