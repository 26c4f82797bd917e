import numpy as np

from ..errors import ShapeError

FULL_FRAME = (520, 696)  # (height, width) of a full acquisition


def patchify(image, frame=FULL_FRAME):
    """Split a (n, c, 520, 696) frame into four quadrants, row-major order."""
    h, w = image.shape[2:]
    if (h, w) != tuple(frame):
        raise ShapeError(f"patchify expects {frame[1]}x{frame[0]} (w x h) input, got {w}x{h}")
    hh, hw = h // 2, w // 2
    return [image[:, :, r:r + hh, c:c + hw].copy() for r in (0, hh) for c in (0, hw)]


def reassemble(patches):
    tl, tr, bl, br = patches
    return np.concatenate([np.concatenate([tl, tr], axis=3), np.concatenate([bl, br], axis=3)], axis=2)
