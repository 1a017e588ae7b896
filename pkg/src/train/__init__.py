"""
Editor-only fine-tuning
"""

from src.train.config import TrainConfig
from src.train.optimizer import Adam, clip_grad_norm
from src.train.schedule import lr_at, total_steps
from src.train.trainer import RunMetrics, evaluate, predict, predict_text, train_editors, write_metrics

__all__ = [
    "Adam",
    "RunMetrics",
    "TrainConfig",
    "clip_grad_norm",
    "evaluate",
    "lr_at",
    "predict",
    "predict_text",
    "total_steps",
    "train_editors",
    "write_metrics",
]
