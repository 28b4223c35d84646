from .autograd import Tensor, no_grad
from .layers import DenseNet, DimensionError
from .optim import Adam, StepSchedule, TrainingError

__all__ = ["Tensor", "no_grad", "DenseNet", "DimensionError", "Adam", "StepSchedule", "TrainingError"]
