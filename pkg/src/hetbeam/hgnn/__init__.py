from .config import HgnnConfig, TrainParams
from .model import HGNN, batch_rates, loss
from .train import (TrainResult, build_model, checkpoint_meta, evaluate, fit, load_checkpoint,
                    prepare, save_checkpoint, sum_se, train)

__all__ = ["HgnnConfig", "TrainParams", "HGNN", "batch_rates", "loss", "TrainResult", "build_model",
           "checkpoint_meta", "evaluate", "fit", "load_checkpoint", "prepare", "save_checkpoint",
           "sum_se", "train"]
