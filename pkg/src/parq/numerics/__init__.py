"""Dense float64 tensor core: autodiff, NN blocks, optimizer, checkpointing."""

from .gradcheck import GradCheckResult, grad_check
from .nn import MLP, Conv2d, LayerNorm, Linear, MultiHeadAttention, mlp_forward, multi_head_attention
from .optim import AdamW, clip_grad_norm, cosine_lr
from .store import ParameterStore, load_checkpoint, save_checkpoint
from .tensor import (
    DTYPE,
    Tensor,
    abs_,
    add,
    astensor,
    concat,
    div,
    dropout,
    exp,
    gather_rows,
    getitem,
    layer_norm,
    log,
    log_softmax,
    matmul,
    mean,
    mul,
    neg,
    no_grad,
    pad2d,
    power,
    relu,
    reshape,
    softmax,
    sub,
    sum_,
    transpose,
)

__all__ = [
    "DTYPE",
    "Tensor",
    "astensor",
    "no_grad",
    "add",
    "sub",
    "neg",
    "mul",
    "div",
    "power",
    "relu",
    "abs_",
    "exp",
    "log",
    "matmul",
    "reshape",
    "transpose",
    "concat",
    "pad2d",
    "getitem",
    "gather_rows",
    "sum_",
    "mean",
    "softmax",
    "log_softmax",
    "layer_norm",
    "dropout",
    "Linear",
    "LayerNorm",
    "MLP",
    "mlp_forward",
    "MultiHeadAttention",
    "multi_head_attention",
    "Conv2d",
    "AdamW",
    "cosine_lr",
    "clip_grad_norm",
    "ParameterStore",
    "save_checkpoint",
    "load_checkpoint",
    "grad_check",
    "GradCheckResult",
]
