"""
Frozen toy multimodal model
"""

from src.model.config import EditPlan, ToyModelConfig
from src.model.weights import FrozenWeights, init_weights, weight_shapes
from src.model.toy_model import ToyMultimodalModel, dataset_loss, span_masks, trainable_fraction
from src.model.pretrain import HeadroomConfig, PretrainConfig, headroom_train, pretrain_base

__all__ = [
    "EditPlan",
    "FrozenWeights",
    "HeadroomConfig",
    "PretrainConfig",
    "ToyModelConfig",
    "ToyMultimodalModel",
    "dataset_loss",
    "headroom_train",
    "init_weights",
    "pretrain_base",
    "span_masks",
    "trainable_fraction",
    "weight_shapes",
]
