"""Small CNN engine: layer passes, losses, SGD training."""

from .layers import (activate, backward, backward_batch, conv1d_forward, conv2d_forward,
                     conv_block, dense_forward, dropout, flatten, forward, loss, pool, softmax)
from .spec import (Activation, AvgPool, Conv1D, Conv2D, Dense, Dropout, Flatten, MaxPool, layer_from_dict,
                   NetworkSpec, Softmax, conv_blocks, endonet, plasticnet_1d, plasticnet_2d)
from .train import (TrainConfig, confusion_matrix, evaluate, init_params, params_from_json,
                    params_to_json, predict, predict_batch, sgd_step, stream_rng, train)

__all__ = [
    "Activation", "AvgPool", "Conv1D", "Conv2D", "Dense", "Dropout", "Flatten", "MaxPool",
    "NetworkSpec", "Softmax", "TrainConfig", "activate", "backward", "backward_batch",
    "confusion_matrix", "conv1d_forward", "conv2d_forward", "conv_block", "conv_blocks",
    "dense_forward", "dropout", "endonet", "evaluate", "flatten", "forward", "init_params", "layer_from_dict",
    "loss", "params_from_json", "params_to_json", "plasticnet_1d", "plasticnet_2d", "pool",
    "predict", "predict_batch", "sgd_step", "softmax", "stream_rng", "train",
]
