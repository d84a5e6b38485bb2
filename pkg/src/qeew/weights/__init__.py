from .estimator import EntityWeighter
from .labels import assign_labels, label_entity, prune_expansions
from .network import (IGNORE, EncoderConfig, backward, encode_slot, forward, init_params, loss,
                      loss_and_grad, predict_levels, prepare)
from .training import TrainConfig, TrainingDivergedError, WeightModel, predict_weights, train

__all__ = [
    "EntityWeighter", "EncoderConfig", "TrainConfig", "WeightModel", "TrainingDivergedError",
    "IGNORE", "assign_labels", "label_entity", "prune_expansions", "encode_slot", "forward",
    "loss", "loss_and_grad", "backward", "init_params", "prepare", "predict_levels",
    "predict_weights", "train",
]
