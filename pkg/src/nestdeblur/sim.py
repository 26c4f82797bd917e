"""Synthetic defocus data: Gaussian PSF surrogate, blur + noise, two-channel phantoms."""
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .io.img16 import read_img16, write_img16
from .io.manifest import ManifestRecord, SyntheticManifest, write_manifest


@dataclass(frozen=True)
class PSFSpec:
    z: float = 0.0
    sigma_per_um: float = 0.15
    radius: int = None
    min_sigma: float = 1e-3

    @property
    def sigma(self):
        return self.sigma_per_um * abs(self.z)

    def with_z(self, z):
        return PSFSpec(z, self.sigma_per_um, self.radius, self.min_sigma)


def gaussian_psf(spec):
    """Normalised (2r+1)x(2r+1) Gaussian kernel; identity when sigma < min_sigma."""
    if spec.sigma_per_um <= 0:
        raise ConfigError(f"sigma_per_um must be positive, got {spec.sigma_per_um}")
    sigma = spec.sigma
    if sigma < spec.min_sigma:
        return np.ones((1, 1))
    r = spec.radius if spec.radius is not None else math.ceil(3 * sigma)
    if r < 0:
        raise ConfigError(f"radius must be >= 0, got {r}")
    d = np.arange(-r, r + 1, dtype=np.float64)
    g = np.exp(-(d[:, None] ** 2 + d[None, :] ** 2) / (2.0 * sigma * sigma))
    return g / g.sum()


def convolve_reflect(image, kernel):
    """Per-channel 2-D convolution with half-sample reflect borders (edge sample repeated).

    With this extension every input pixel receives total weight 1 from a
    mirror-symmetric kernel, so the image mean is preserved.
    """
    kh, kw = kernel.shape
    rh, rw = kh // 2, kw // 2
    n, c, h, w = image.shape
    if rh > h or rw > w:
        raise ConfigError(f"kernel {kernel.shape} too large for {h}x{w} image with reflect borders")
    padded = np.pad(image, ((0, 0), (0, 0), (rh, rh), (rw, rw)), mode="symmetric")
    out = np.zeros(image.shape, dtype=np.float64)
    # The kernel is flipped for a true convolution; Gaussians are symmetric anyway.
    flipped = kernel[::-1, ::-1]
    for i in range(kh):
        for j in range(kw):
            out += flipped[i, j] * padded[:, :, i : i + h, j : j + w]
    return out


def apply_defocus(y, kernel, noise_sigma, seed):
    """Blur ``y`` with ``kernel``, add N(0, noise_sigma^2) noise, clip to [0, 1]."""
    if y.ndim != 4:
        raise ConfigError(f"expected (n, c, h, w) image, got shape {y.shape}")
    x = convolve_reflect(np.asarray(y, dtype=np.float64), np.asarray(kernel, dtype=np.float64))
    if noise_sigma > 0:
        x = x + np.random.default_rng(seed).normal(0.0, noise_sigma, size=x.shape)
    return np.clip(x, 0.0, 1.0)


@dataclass(frozen=True)
class PhantomSpec:
    size: tuple = (96, 96)
    channels: int = 2
    spot_count: tuple = (6, 14)
    spot_sigma: tuple = (1.0, 3.0)
    filament_count: tuple = (4, 9)
    filament_width: tuple = (0.6, 1.2)
    intensity: tuple = (0.35, 0.9)
    background: float = 0.04
    # Explicit (row, col, sigma, intensity) spots rendered in addition to the random ones.
    fixed_spots: tuple = field(default=())

    def to_dict(self):
        return asdict(self)


def gaussian_bump(h, w, row, col, sigma, amplitude):
    rr = np.arange(h, dtype=np.float64)[:, None] - row
    cc = np.arange(w, dtype=np.float64)[None, :] - col
    return amplitude * np.exp(-(rr * rr + cc * cc) / (2.0 * sigma * sigma))


def _render_curve(h, w, points, width, amplitude):
    """Gaussian line profile around a sampled curve, evaluated inside its bounding box."""
    out = np.zeros((h, w))
    margin = 5.0 * width + 1.0
    r0 = max(int(np.floor(points[:, 0].min() - margin)), 0)
    r1 = min(int(np.ceil(points[:, 0].max() + margin)) + 1, h)
    c0 = max(int(np.floor(points[:, 1].min() - margin)), 0)
    c1 = min(int(np.ceil(points[:, 1].max() + margin)) + 1, w)
    rr = np.arange(r0, r1, dtype=np.float64)[:, None, None]
    cc = np.arange(c0, c1, dtype=np.float64)[None, :, None]
    d2 = (rr - points[:, 0]) ** 2 + (cc - points[:, 1]) ** 2
    out[r0:r1, c0:c1] = amplitude * np.exp(-d2.min(axis=-1) / (2.0 * width * width))
    return out


def phantom_image(spec, seed):
    """Two-channel fluorescence-like phantom in [0, 1], shape (1, 2, h, w).

    Channel 0 holds Gaussian spots (nucleus-like). Channel 1 holds smooth
    curved filaments (cytoskeleton-like) plus dim copies of the same spots,
    so the channels share structure without being identical.
    """
    if spec.channels != 2:
        raise ConfigError("phantoms are two-channel")
    h, w = spec.size
    rng = np.random.default_rng(seed)
    nuclei = np.zeros((h, w))
    actin = np.zeros((h, w))

    spots = list(spec.fixed_spots)
    for _ in range(int(rng.integers(spec.spot_count[0], spec.spot_count[1] + 1))):
        spots.append((
            rng.uniform(0, h - 1), rng.uniform(0, w - 1),
            rng.uniform(*spec.spot_sigma), rng.uniform(*spec.intensity),
        ))
    for row, col, sigma, amp in spots:
        nuclei += gaussian_bump(h, w, row, col, sigma, amp)
        actin += gaussian_bump(h, w, row, col, sigma, 0.25 * amp)

    for _ in range(int(rng.integers(spec.filament_count[0], spec.filament_count[1] + 1))):
        # Quadratic Bezier curve between two random points with a random control point.
        p0, p1, p2 = rng.uniform([0, 0], [h - 1, w - 1], size=(3, 2))
        # Sample spacing <= 0.25 px: the control polygon bounds the curve length.
        length = np.linalg.norm(p1 - p0) + np.linalg.norm(p2 - p1)
        t = np.linspace(0.0, 1.0, int(4 * length) + 2)[:, None]
        curve = (1 - t) ** 2 * p0 + 2 * (1 - t) * t * p1 + t ** 2 * p2
        actin = np.maximum(actin, _render_curve(h, w, curve, rng.uniform(*spec.filament_width), rng.uniform(*spec.intensity)))

    img = np.stack([nuclei, actin])[None] + spec.background
    return np.clip(img, 0.0, 1.0)


def pair_seed(master_seed, index, z):
    return int(np.random.SeedSequence([master_seed, index, int(round(z * 1000)) & 0xFFFFFFFF]).generate_state(1)[0])


def gen_dataset(phantom, z_list, psf, noise_sigma, count, out_dir, seed):
    """Write ``count * len(z_list)`` sharp/blurred pairs plus ``manifest.tsv`` (written last)."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "sharp").mkdir(exist_ok=True)
        (out_dir / "blurred").mkdir(exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create output directory {out_dir}: {exc}") from exc

    records = []
    for i in range(count):
        phantom_seed = int(np.random.SeedSequence([seed, i]).generate_state(1)[0])
        sharp = phantom_image(phantom, phantom_seed)
        sharp_rel = f"sharp/p{i:05d}.im16"
        _write(out_dir / sharp_rel, sharp)
        for z in z_list:
            s = pair_seed(seed, i, z)
            blurred = apply_defocus(sharp, gaussian_psf(psf.with_z(z)), noise_sigma, s)
            blurred_rel = f"blurred/p{i:05d}_z{_ztag(z)}.im16"
            _write(out_dir / blurred_rel, blurred)
            records.append(ManifestRecord(sharp_rel, blurred_rel, float(z), s))

    manifest = SyntheticManifest(
        records=records,
        params={
            "sigma_per_um": psf.sigma_per_um,
            "radius": psf.radius,
            "min_sigma": psf.min_sigma,
            "noise_sigma": noise_sigma,
            "seed": seed,
            "count": count,
            "size": "x".join(str(s) for s in phantom.size),
        },
        root=out_dir,
    )
    write_manifest(manifest, out_dir / "manifest.tsv")
    return manifest


def _ztag(z):
    return f"{z:g}".replace("-", "m").replace(".", "p")


def _write(path, img):
    try:
        write_img16(img, path)
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}") from exc


def load_pair(manifest, record):
    return read_img16(manifest.root / record.sharp), read_img16(manifest.root / record.blurred)
