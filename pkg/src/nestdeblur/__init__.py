"""Nested multi-level U-Net for microscopy defocus deblurring."""
from .config import DESK_PROFILE, FULL_PROFILE, RunConfig
from .model import (
    NestedConfig,
    build_nested,
    count_params,
    forward_nested,
    fuse_features,
    make_pyramid,
    multiscale_loss,
    predict,
    subnet_forward,
    train_step,
)

__version__ = "0.1.0"

__all__ = [
    "DESK_PROFILE", "NestedConfig", "FULL_PROFILE", "RunConfig", "build_nested", "count_params",
    "forward_nested", "fuse_features", "make_pyramid", "multiscale_loss", "predict",
    "subnet_forward", "train_step",
]
