"""Attack-stage classification of bark-beetle infested tree crowns from UAV
orthomosaics: data ingestion, balancing augmentation, a pyramid-network
classifier trained with focal loss, classical baselines and evaluation."""
from ._jit import backend_name
from .data import NUM_CLASSES, STAGE_LABELS, AttackStage, CrownPatch

__version__ = "0.1.0"

__all__ = ["AttackStage", "CrownPatch", "NUM_CLASSES", "STAGE_LABELS", "backend_name", "__version__"]
