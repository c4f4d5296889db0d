from .fixture import Fixture, make_synthetic_fixture, render_crown
from .metrics import (
    AccuracyReport,
    ConfusionMatrix,
    accuracy,
    average_accuracy,
    confusion_matrix,
    group_by_stage,
    mean_color_scatter,
    mean_rgb_silhouette,
    rgb_histograms,
    silhouette,
)
from .render import render_outputs
from .tsne import Embedding2D, joint_probabilities, tsne_embed

__all__ = [
    "Fixture", "make_synthetic_fixture", "render_crown",
    "AccuracyReport", "ConfusionMatrix", "accuracy", "average_accuracy", "confusion_matrix",
    "group_by_stage", "mean_color_scatter", "mean_rgb_silhouette", "rgb_histograms", "silhouette",
    "render_outputs", "Embedding2D", "joint_probabilities", "tsne_embed",
]
