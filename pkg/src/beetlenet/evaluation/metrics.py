from dataclasses import dataclass, field

import numpy as np

from ..data import NUM_CLASSES, STAGE_LABELS


@dataclass
class ConfusionMatrix:
    """Rows are true classes, columns predicted, in attack-stage order."""

    counts: np.ndarray

    @property
    def total(self):
        return int(self.counts.sum())

    @property
    def correct(self):
        return int(np.trace(self.counts))

    def to_rows(self):
        return [[STAGE_LABELS[t]] + [int(v) for v in self.counts[t]] for t in range(NUM_CLASSES)]


@dataclass
class AccuracyReport:
    per_flight: dict = field(default_factory=dict)
    macro: float = 0.0
    micro: float = 0.0


def confusion_matrix(predictions, truths):
    pred = np.asarray(predictions, dtype=np.int64).ravel()
    true = np.asarray(truths, dtype=np.int64).ravel()
    if pred.shape != true.shape:
        raise ValueError(f"length mismatch: {pred.size} predictions vs {true.size} truths")
    counts = np.zeros((NUM_CLASSES, NUM_CLASSES), dtype=np.int64)
    np.add.at(counts, (true, pred), 1)
    return ConfusionMatrix(counts)


def accuracy(matrix):
    if matrix.total == 0:
        raise ValueError("accuracy of an empty confusion matrix is undefined")
    return matrix.correct / matrix.total


def average_accuracy(matrices):
    """Macro (mean of per-flight accuracies) and micro (pooled) averages.

    ``matrices`` is a mapping flight -> ConfusionMatrix or a plain sequence.
    """
    if not isinstance(matrices, dict):
        matrices = {str(i): m for i, m in enumerate(matrices)}
    if not matrices:
        raise ValueError("need at least one confusion matrix")
    per = {k: accuracy(m) for k, m in matrices.items()}
    correct = sum(m.correct for m in matrices.values())
    total = sum(m.total for m in matrices.values())
    return AccuracyReport(per_flight=per, macro=float(np.mean(list(per.values()))), micro=correct / total)


def mean_color_scatter(patches):
    """Per-patch channel means paired with the patch label."""
    return [(p.pixels.reshape(-1, 3).mean(axis=0), p.stage) for p in patches]


def rgb_histograms(groups):
    """Exact 256-bin histograms per class and channel.

    ``groups`` maps a stage to its list of patches; the result maps the same
    keys to 3 x 256 integer arrays (R, G, B rows).
    """
    out = {}
    for stage, patches in groups.items():
        if not patches:
            raise ValueError(f"no patches for class {stage!r}")
        hist = np.zeros((3, 256), dtype=np.int64)
        for p in patches:
            flat = p.pixels.reshape(-1, 3)
            for c in range(3):
                hist[c] += np.bincount(flat[:, c], minlength=256)
        out[stage] = hist
    return out


def group_by_stage(patches):
    groups = {}
    for p in patches:
        groups.setdefault(p.stage, []).append(p)
    return dict(sorted(groups.items()))


def silhouette(features, labels):
    from sklearn.metrics import silhouette_score

    return float(silhouette_score(np.asarray(features, dtype=np.float64), np.asarray(labels)))


def mean_rgb_silhouette(patches):
    pts = mean_color_scatter(patches)
    return silhouette(np.array([c for c, _ in pts]), np.array([int(s) for _, s in pts]))
