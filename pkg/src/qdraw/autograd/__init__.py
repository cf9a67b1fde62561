from .checkpoint import load_checkpoint, save_checkpoint
from .engine import (
    ShapeError,
    Value,
    add,
    as_value,
    concat,
    index_rows,
    matmul,
    mean_all,
    mul,
    no_grad,
    relu,
    sigmoid,
    slice_last,
    sub,
    sum_all,
    tanh,
    where,
)
from .nn import Linear, LstmParams, log_softmax_np, lstm_cell, max_pool_1d, softmax_cross_entropy, softmax_np, uniform_init
from .optim import AdamState, adam_step
