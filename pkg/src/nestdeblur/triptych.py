"""Side-by-side input | prediction | ground-truth rendering as an 8-bit PNG."""
from pathlib import Path

import numpy as np
from PIL import Image

from .checkpoint import load_checkpoint
from .io import read_img16
from .model import predict

GUTTER = 4


def _normalise(panel):
    lo, hi = float(panel.min()), float(panel.max())
    if hi <= lo:
        return np.zeros_like(panel, dtype=np.float64)
    return (panel - lo) / (hi - lo)


def render_panel(image):
    """(c, h, w) image -> (h, w, 3) uint8. Two channels render magenta (0) over green (1)."""
    img = _normalise(np.asarray(image, dtype=np.float64))
    if img.shape[0] == 1:
        rgb = np.repeat(img[0][..., None], 3, axis=-1)
    else:
        a, b = img[0], img[1]
        rgb = np.stack([a, b, a], axis=-1)
    return np.floor(rgb * 255.0 + 0.5).astype(np.uint8)


def compose_triptych(panels, gutter=GUTTER):
    h, w = panels[0].shape[:2]
    canvas = np.zeros((h, len(panels) * w + (len(panels) - 1) * gutter, 3), dtype=np.uint8)
    for k, p in enumerate(panels):
        x0 = k * (w + gutter)
        canvas[:, x0:x0 + w] = p
    return canvas


def export_triptych(checkpoint, sharp_path, blurred_path, out_path, gutter=GUTTER):
    model = load_checkpoint(checkpoint).model
    x = read_img16(blurred_path)
    y = read_img16(sharp_path)
    pred = np.clip(predict(model, x), 0.0, 1.0)
    canvas = compose_triptych([render_panel(x[0]), render_panel(pred[0]), render_panel(y[0])], gutter)
    Image.fromarray(canvas, mode="RGB").save(Path(out_path), format="PNG")
    return canvas
