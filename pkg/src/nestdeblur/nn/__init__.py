from .adam import AdamState, adam_step
from .gradcheck import grad_check, relative_error
from .init import he_init
from .layers import (
    avg_pool2x,
    concat_channels,
    concat_channels_backward,
    conv2d,
    conv2d_backward,
    pool_down2x,
    pool_down2x_backward,
    relu,
    relu_backward,
    resize_bilinear,
    upsample2x,
    upsample2x_backward,
)
from .param import Param

__all__ = [
    "AdamState", "Param", "adam_step", "avg_pool2x", "concat_channels",
    "concat_channels_backward", "conv2d", "conv2d_backward", "grad_check", "he_init",
    "pool_down2x", "pool_down2x_backward", "relative_error", "relu", "relu_backward",
    "resize_bilinear", "upsample2x", "upsample2x_backward",
]
