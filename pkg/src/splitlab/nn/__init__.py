"""Dense-tensor 1D CNN with hand-written forward/backward passes."""

from .layers import (
    conv1d_backward,
    conv1d_forward,
    leaky_relu_backward,
    leaky_relu_forward,
    linear_backward,
    linear_forward,
    maxpool1d_backward,
    maxpool1d_forward,
)
from .loss import ce_softmax_grad, cross_entropy, one_hot, softmax
from .model import (
    Conv1D,
    LeakyReLU,
    Linear,
    MaxPool1D,
    ModelSpec,
    Softmax,
    TrainConfig,
    backward_client,
    backward_local,
    default_model_spec,
    forward_client,
    forward_local,
    init_client_params,
    init_linear_params,
    load_config,
    load_weights,
    save_config,
    save_weights,
)
from .optim import Adam, sgd_step

__all__ = [
    "conv1d_forward", "conv1d_backward", "leaky_relu_forward", "leaky_relu_backward",
    "maxpool1d_forward", "maxpool1d_backward", "linear_forward", "linear_backward",
    "softmax", "cross_entropy", "ce_softmax_grad", "one_hot",
    "Conv1D", "LeakyReLU", "MaxPool1D", "Linear", "Softmax",
    "ModelSpec", "TrainConfig", "default_model_spec",
    "init_client_params", "init_linear_params",
    "forward_client", "backward_client", "forward_local", "backward_local",
    "save_config", "load_config", "save_weights", "load_weights",
    "Adam", "sgd_step",
]
