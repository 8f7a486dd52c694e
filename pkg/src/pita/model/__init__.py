from pita.model.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from pita.model.network import (
    VARIANTS,
    Autoencoder,
    Decoded,
    ModelConfig,
    ModelParams,
    decode_action_space,
    decode_pita,
    decode_simple,
    init_params,
    parameter_count,
    split_output,
)
from pita.model.optim import AdamState, adam_step
from pita.model.training import TrainConfig, TrainingLog, TrainResult, batch_loss, position_scale, train

__all__ = [
    "VARIANTS",
    "AdamState",
    "Autoencoder",
    "Checkpoint",
    "Decoded",
    "ModelConfig",
    "ModelParams",
    "TrainConfig",
    "TrainResult",
    "TrainingLog",
    "adam_step",
    "batch_loss",
    "decode_action_space",
    "decode_pita",
    "decode_simple",
    "init_params",
    "load_checkpoint",
    "parameter_count",
    "position_scale",
    "save_checkpoint",
    "split_output",
    "train",
]
