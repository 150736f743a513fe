"""Minimal differentiable-computation substrate.

Single-precision compute by default; verification runs build float64 graphs.
"""

from .tape import (  # noqa: F401
    Parameter,
    Tensor,
    add,
    clip,
    concat,
    div,
    exp,
    getitem,
    log,
    matmul,
    maximum,
    mean,
    minimum,
    mul,
    reduce_sum,
    reshape,
    sqrt,
    stack,
    sub,
    take,
    tanh,
    tensor,
    transpose,
)
from .ops import (  # noqa: F401
    conv1d,
    cosine_similarity,
    embedding_lookup,
    gelu,
    layer_norm,
    linear,
    log_softmax,
    lstm_cell,
    scaled_dot_attention,
    sigmoid,
    softmax,
)
from .optim import AdamState, adam_step, lr_schedule, zero_grads  # noqa: F401
from .gradcheck import check_gradients, finite_difference_grad, primitive_suite  # noqa: F401
