"""Dense-tensor reverse-mode differentiation core, losses, and optimizer."""

from .tensor import (
    Tensor,
    ShapeError,
    no_grad,
    grad_enabled,
    make_op,
    constant,
    parameter,
    matmul,
    add,
    sub,
    mul,
    neg,
    scale,
    add_const,
    concat,
    reshape,
    take,
    reduce_max,
    reduce_mean,
    reduce_sum,
    leaky_relu,
    relu,
    sigmoid,
    tanh,
    softmax,
    sqrt,
    square,
    backward,
)
from .losses import (
    mse_loss,
    cross_entropy_loss,
    triplet_loss,
    batch_hard_triplet_loss,
    mine_batch_hard,
    MiningError,
)
from .optim import AdamState, adam_step
from .store import ParamStore, save_checkpoint, load_checkpoint, file_sha256
from .gradcheck import finite_diff_check

__all__ = [
    "Tensor",
    "ShapeError",
    "no_grad",
    "grad_enabled",
    "make_op",
    "constant",
    "parameter",
    "matmul",
    "add",
    "sub",
    "mul",
    "neg",
    "scale",
    "add_const",
    "concat",
    "reshape",
    "take",
    "reduce_max",
    "reduce_mean",
    "reduce_sum",
    "leaky_relu",
    "relu",
    "sigmoid",
    "tanh",
    "softmax",
    "sqrt",
    "square",
    "backward",
    "mse_loss",
    "cross_entropy_loss",
    "triplet_loss",
    "batch_hard_triplet_loss",
    "mine_batch_hard",
    "MiningError",
    "AdamState",
    "adam_step",
    "ParamStore",
    "save_checkpoint",
    "load_checkpoint",
    "file_sha256",
    "finite_diff_check",
]
