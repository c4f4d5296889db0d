from .checkpoint import CheckpointError, LoadReport, export_checkpoint, import_checkpoint, load_checkpoint
from .loss import FocalLossParams, cross_entropy, focal_loss, focal_loss_per_sample, predict, softmax
from .model import (
    NetworkConfig,
    aggregate_logits,
    backbone_forward,
    build_network,
    classification_subnet_forward,
    forward,
    fpn_forward,
    parameter_specs,
    prepare_batch,
)
from .store import ParameterStore

__all__ = [
    "CheckpointError", "LoadReport", "export_checkpoint", "import_checkpoint", "load_checkpoint",
    "FocalLossParams", "cross_entropy", "focal_loss", "focal_loss_per_sample", "predict", "softmax",
    "NetworkConfig", "aggregate_logits", "backbone_forward", "build_network",
    "classification_subnet_forward", "forward", "fpn_forward", "parameter_specs", "prepare_batch",
    "ParameterStore",
]
