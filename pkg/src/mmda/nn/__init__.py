"""Numeric core: tensors, a reverse-mode tape, layers and Adadelta."""

from . import ops
from .gradcheck import NondeterministicLossError, gradient_check
from .layers import BiLSTM, Embedding, Linear, LSTMCell, Module, bilstm_layer
from .optim import Adadelta, adadelta_update, clip_grad_norm
from .tensor import NonFiniteError, Parameter, Tape, Tensor, precision, resolve_dtype

__all__ = [
    "ops", "Tensor", "Parameter", "Tape", "precision", "resolve_dtype", "NonFiniteError",
    "Module", "Linear", "Embedding", "LSTMCell", "BiLSTM", "bilstm_layer",
    "Adadelta", "adadelta_update", "clip_grad_norm",
    "gradient_check", "NondeterministicLossError",
]
