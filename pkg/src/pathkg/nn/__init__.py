from .gradcheck import grad_check, tape_gradients
from .loss import LossReport, bce_loss
from .optim import adam_step
from .params import ParameterStore
from .tape import Tape, Tensor, no_grad

__all__ = [
    "LossReport",
    "ParameterStore",
    "Tape",
    "Tensor",
    "adam_step",
    "bce_loss",
    "grad_check",
    "no_grad",
    "tape_gradients",
]
