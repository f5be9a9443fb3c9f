from .checkpoint import load_params, save_params
from .gradcheck import grad_check, tensor_grad_check
from .params import GradBuffer, ParamVector, RmsPropState, rmsprop_apply
from .tensor import (
    Tape,
    Tensor,
    add,
    add_n,
    backward,
    bernoulli_nll,
    categorical_nll,
    concat,
    conv2d,
    flatten,
    linear,
    log_softmax,
    lstm_cell,
    mse,
    policy_entropy,
    relu,
    reshape,
    scale,
    sigmoid,
    softmax,
    tanh,
)

__all__ = [
    "GradBuffer",
    "ParamVector",
    "RmsPropState",
    "Tape",
    "Tensor",
    "add",
    "add_n",
    "backward",
    "bernoulli_nll",
    "categorical_nll",
    "concat",
    "conv2d",
    "flatten",
    "grad_check",
    "linear",
    "load_params",
    "log_softmax",
    "lstm_cell",
    "mse",
    "policy_entropy",
    "relu",
    "reshape",
    "rmsprop_apply",
    "save_params",
    "scale",
    "sigmoid",
    "softmax",
    "tanh",
    "tensor_grad_check",
]
