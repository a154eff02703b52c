from .tensor import (
    Tensor,
    ShapeError,
    no_grad,
    add,
    sub,
    mul,
    div,
    pow_scalar,
    exp,
    log,
    sqrt,
    abs_,
    softplus,
    gelu,
    prelu,
    softmax,
    reshape,
    transpose,
    getitem,
    concat,
    sum_,
    mean,
    matmul,
    layer_norm,
    rms_norm,
    conv1d,
    conv_transpose1d,
    embedding,
    adaptive_avg_pool1d,
    frame_signal,
    rfft_mag,
    dropout,
)
from .layers import (
    Parameter,
    Module,
    ModuleList,
    Linear,
    Conv1d,
    ConvTranspose1d,
    PReLU,
    LayerNorm,
    RMSNorm,
    BatchNorm1d,
    Dropout,
    Embedding,
    MultiHeadAttention,
)
from .optim import AdamW, OptimError, exponential_decay, warmup_cosine
from .gradcheck import grad_check
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint

__all__ = [n for n in dir() if not n.startswith("_")]
