"""Model fixtures shared by several test modules."""
import numpy as np

import nestdeblur.model as model_mod
from nestdeblur.model import build_nested, forward_nested, make_pyramid


def kink_margins(model, x, y):
    """Distances of the evaluation point from every ReLU, max-pool and L1 kink."""
    relu_min, pool_min = [np.inf], [np.inf]
    orig_relu, orig_pool = model_mod.relu, model_mod.pool_down2x

    def relu(t):
        relu_min.append(float(np.min(np.abs(t))))
        return orig_relu(t)

    def pool(t):
        n, c, h, w = t.shape
        win = t.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
        win = np.sort(win, axis=-1)
        live = win[..., 3] > 0  # ties among dead (zero) units carry no gradient
        if live.any():
            pool_min.append(float(np.min((win[..., 3] - win[..., 2])[live])))
        return orig_pool(t)

    model_mod.relu, model_mod.pool_down2x = relu, pool
    try:
        preds = forward_nested(model, make_pyramid(x, model.config.levels))
    finally:
        model_mod.relu, model_mod.pool_down2x = orig_relu, orig_pool
    l1 = min(float(np.min(np.abs(p - t))) for p, t in zip(preds, make_pyramid(y, model.config.levels)))
    return min(relu_min), min(pool_min), l1


def generic_point(config, eps, max_tries=50):
    """First (model, x, y) from a seed sequence whose kink margins all exceed 10 * eps."""
    for seed in range(max_tries):
        model = build_nested(config, seed).astype(np.float64)
        rng = np.random.default_rng(100 + seed)
        x = rng.random((1, config.in_channels, 8, 8))
        y = rng.random((1, config.out_channels, 8, 8))
        if min(kink_margins(model, x, y)) > 10 * eps:
            return model, x, y
    raise RuntimeError("no generic evaluation point found")


def make_identity(model):
    """Set weights so the level-1 prediction reproduces the (non-negative) input exactly.

    Every conv on the path from the input channels to the output copies
    channel k to channel k; all other weights and biases are zero.
    """
    cfg = model.config
    sub = model.subnets[0]
    for p in model.parameters():
        p.value[...] = 0
    def centre(name, src_offset=0):
        w = sub.params[f"{name}.weight"].value
        for c in range(cfg.in_channels):
            w[c, src_offset + c, 1, 1] = 1.0

    centre("enc0.conv0")
    centre("enc0.conv1")
    # dec0.conv0 sees [upsampled path (c0 channels) : E_0]; copy from the E_0 half.
    centre("dec0.conv0", src_offset=sub.widths[0])
    centre("dec0.conv1")
    centre("out")
    return model
