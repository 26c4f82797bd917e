"""PSNR / SSIM on (n, c, h, w) images and the CSV report layout."""
import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractError, DataError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
K1, K2 = 0.01, 0.03
REPORT_HEADER = ("tag", "model", "levels", "mode", "psnr_db", "ssim", "params")


def _check_pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ContractError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b, data_range=1.0):
    """Peak signal-to-noise ratio in dB; ``math.inf`` when the images are identical."""
    a, b = _check_pair(a, b)
    if data_range <= 0:
        raise ContractError(f"data_range must be positive, got {data_range}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(data_range * data_range / mse)


def _gaussian_window(size=SSIM_WINDOW, sigma=SSIM_SIGMA):
    d = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(d * d) / (2.0 * sigma * sigma))
    return g / g.sum()


def _filter_valid(img, g):
    # Separable filtering over the last two axes, valid region only.
    k = g.size
    h, w = img.shape[-2:]
    rows = sum(g[i] * img[..., i:i + h - k + 1, :] for i in range(k))
    return sum(g[j] * rows[..., :, j:j + w - k + 1] for j in range(k))


def ssim(a, b, data_range=1.0):
    """Mean SSIM with an 11x11 Gaussian window (sigma 1.5), averaged over channels and batch.

    Local statistics use population (biased) moments and only windows that
    fit entirely inside the image.
    """
    a, b = _check_pair(a, b)
    if a.ndim != 4:
        raise ContractError(f"expected (n, c, h, w) images, got shape {a.shape}")
    if min(a.shape[2:]) < SSIM_WINDOW:
        raise ContractError(f"images {a.shape[2:]} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    g = _gaussian_window()
    c1 = (K1 * data_range) ** 2
    c2 = (K2 * data_range) ** 2
    mu_a = _filter_valid(a, g)
    mu_b = _filter_valid(b, g)
    var_a = _filter_valid(a * a, g) - mu_a * mu_a
    var_b = _filter_valid(b * b, g) - mu_b * mu_b
    cov = _filter_valid(a * b, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


@dataclass(frozen=True)
class ReportRow:
    tag: str
    model: str
    levels: int
    mode: str
    psnr_db: float
    ssim: float
    params: int

    def cells(self):
        return [
            self.tag, self.model, str(self.levels), self.mode,
            _fmt(self.psnr_db), _fmt(self.ssim), str(self.params),
        ]


def _fmt(x):
    if isinstance(x, float) and math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if isinstance(x, float) and math.isnan(x):
        return "nan"
    return repr(float(x))


def sort_rows(rows):
    return sorted(rows, key=lambda r: (r.tag, r.model))


def write_report(rows, path):
    path = Path(path)
    try:
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(REPORT_HEADER)
            for row in sort_rows(rows):
                writer.writerow(row.cells())
    except OSError as exc:
        raise DataError(f"cannot write report {path}: {exc}") from exc


def read_report(path):
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        return [
            ReportRow(r["tag"], r["model"], int(r["levels"]), r["mode"], float(r["psnr_db"]),
                      float(r["ssim"]), int(r["params"]))
            for r in reader
        ]
