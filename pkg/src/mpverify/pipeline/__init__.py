"""Joint model, training loop, prediction and checkpoints."""

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import ModelConfig, load_config, parse_config_text
from .model import (MRCModel, NoAnswerError, Prediction, combined_score, joint_loss, predict,
                    predict_all, predict_batch, select_answer)
from .train import TrainingError, TrainResult, evaluate_model, exact_span_accuracy, train

__all__ = [
    "CheckpointError", "MRCModel", "ModelConfig", "NoAnswerError", "Prediction", "TrainResult",
    "TrainingError", "combined_score", "evaluate_model", "exact_span_accuracy", "joint_loss",
    "load_checkpoint", "load_config", "parse_config_text", "predict", "predict_all",
    "predict_batch", "save_checkpoint", "select_answer", "train",
]
