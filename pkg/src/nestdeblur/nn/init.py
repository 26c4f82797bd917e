import math

import numpy as np

from ..errors import ConfigError


def he_init(shape, seed):
    """Zero-mean normal draws with variance 2 / fan_in, fan_in = prod(shape[1:])."""
    shape = tuple(int(s) for s in shape)
    fan_in = math.prod(shape[1:]) if len(shape) > 1 else 0
    if fan_in <= 0:
        raise ConfigError(f"cannot compute a positive fan-in for shape {shape}")
    rng = np.random.default_rng(seed)
    return rng.standard_normal(shape) * math.sqrt(2.0 / fan_in)
