"""The img16 container: "IM16", u32 version, u32 width, u32 height, u32 channels,
then width*height*channels little-endian u16 samples, channel-planar."""
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ContractError, FormatError, VersionError

MAGIC = b"IM16"
VERSION = 1
HEADER = struct.Struct("<4sIIII")
MAX_SAMPLES = 1 << 31


@dataclass
class Img16:
    width: int
    height: int
    channels: int
    samples: np.ndarray  # uint16, shape (channels, height, width)

    def __post_init__(self):
        expected = (self.channels, self.height, self.width)
        if self.samples.shape != expected:
            raise ContractError(f"samples shape {self.samples.shape} does not match header {expected}")


def normalize_u16(img):
    """Map u16 samples to [0, 1] reals, shape (1, c, h, w)."""
    return (img.samples.astype(np.float64) / 65535.0)[None]


def quantize_u16(image):
    """Inverse of :func:`normalize_u16` with round-half-up."""
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 4 or arr.shape[0] != 1:
        raise ContractError(f"expected a single-item (1, c, h, w) image, got shape {arr.shape}")
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0 or not np.all(np.isfinite(arr))):
        raise ContractError("img16 values must lie in [0, 1]")
    samples = np.floor(arr[0] * 65535.0 + 0.5).astype(np.uint16)
    c, h, w = samples.shape
    return Img16(w, h, c, samples)


def encode_img16(img):
    return HEADER.pack(MAGIC, VERSION, img.width, img.height, img.channels) + img.samples.astype("<u2").tobytes()


def decode_img16(buf):
    if len(buf) < HEADER.size:
        raise FormatError(f"file shorter than the {HEADER.size}-byte header", offset=len(buf))
    magic, version, width, height, channels = HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", offset=0)
    if version != VERSION:
        raise VersionError(f"unsupported img16 version {version} (expected {VERSION})")
    count = width * height * channels
    if count > MAX_SAMPLES:
        raise FormatError(f"declared dims {width}x{height}x{channels} overflow", offset=8)
    expected = HEADER.size + 2 * count
    if len(buf) < expected:
        raise FormatError(f"truncated payload: need {expected} bytes, file has {len(buf)}", offset=len(buf))
    if len(buf) > expected:
        raise FormatError(f"{len(buf) - expected} trailing bytes after payload", offset=expected)
    samples = np.frombuffer(buf, dtype="<u2", count=count, offset=HEADER.size)
    return Img16(width, height, channels, samples.astype(np.uint16).reshape(channels, height, width))


def write_img16(image, path):
    Path(path).write_bytes(encode_img16(quantize_u16(image)))


def read_img16_raw(path):
    return decode_img16(Path(path).read_bytes())


def read_img16(path):
    return normalize_u16(read_img16_raw(path))
