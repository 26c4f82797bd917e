"""Reader for the TIFF subset the microscopy corpus uses.

Supported: classic (non-Big) TIFF, either byte order, first IFD only,
16-bit unsigned samples, 1 or more samples per pixel (chunky or planar),
strip organisation, no compression or LZW, optional horizontal predictor.
Everything else raises :class:`UnsupportedFormatError` naming the tag.
"""
import struct
from pathlib import Path

import numpy as np

from ..errors import DecodeError, FormatError, UnsupportedFormatError
from .img16 import Img16

TAG_NAMES = {
    256: "ImageWidth", 257: "ImageLength", 258: "BitsPerSample", 259: "Compression",
    262: "PhotometricInterpretation", 273: "StripOffsets", 277: "SamplesPerPixel",
    278: "RowsPerStrip", 279: "StripByteCounts", 284: "PlanarConfiguration",
    317: "Predictor", 322: "TileWidth", 339: "SampleFormat",
}
TYPE_FORMATS = {1: "B", 3: "H", 4: "I", 16: "Q"}
TYPE_SIZES = {1: 1, 2: 1, 3: 2, 4: 4, 5: 8, 6: 1, 7: 1, 8: 2, 9: 4, 10: 8, 11: 4, 12: 8, 16: 8}


def lzw_decode(data):
    """Decode a TIFF-flavoured LZW stream (MSB-first codes, early change)."""
    CLEAR, EOI = 256, 257
    out = bytearray()
    table = [bytes([i]) for i in range(256)] + [b"", b""]
    width = 9
    prev = None
    buf = nbits = pos = 0
    n = len(data)
    while True:
        while nbits < width:
            if pos >= n:
                return bytes(out)  # some writers omit EOI at the very end
            buf = (buf << 8) | data[pos]
            pos += 1
            nbits += 8
        nbits -= width
        code = (buf >> nbits) & ((1 << width) - 1)
        buf &= (1 << nbits) - 1
        if code == CLEAR:
            del table[258:]
            width = 9
            prev = None
            continue
        if code == EOI:
            return bytes(out)
        if prev is None:
            if code >= 256:
                raise DecodeError(f"LZW code {code} without a preceding literal", offset=pos)
            entry = table[code]
        elif code < len(table):
            entry = table[code]
            table.append(prev + entry[:1])
        elif code == len(table):
            entry = prev + prev[:1]
            table.append(entry)
        else:
            raise DecodeError(f"LZW code {code} beyond table size {len(table)}", offset=pos)
        out += entry
        prev = entry
        if len(table) + 1 >= (1 << width):
            if width == 12:
                if len(table) > 4096:
                    raise DecodeError("LZW table overflow without a clear code", offset=pos)
            else:
                width += 1


def _read_ifd(buf, endian):
    (first_ifd,) = struct.unpack_from(endian + "I", buf, 4)
    if first_ifd + 2 > len(buf):
        raise FormatError("IFD offset past end of file", offset=4)
    (count,) = struct.unpack_from(endian + "H", buf, first_ifd)
    tags = {}
    for k in range(count):
        off = first_ifd + 2 + 12 * k
        if off + 12 > len(buf):
            raise FormatError("truncated IFD", offset=off)
        tag, typ, n = struct.unpack_from(endian + "HHI", buf, off)
        size = TYPE_SIZES.get(typ, 1) * n
        if typ not in TYPE_FORMATS:
            tags[tag] = None
            continue
        data_off = off + 8 if size <= 4 else struct.unpack_from(endian + "I", buf, off + 8)[0]
        if data_off + size > len(buf):
            raise FormatError(f"tag {TAG_NAMES.get(tag, tag)} data past end of file", offset=data_off)
        tags[tag] = list(struct.unpack_from(endian + TYPE_FORMATS[typ] * n, buf, data_off))
    return tags


def _one(tags, tag, default=None):
    values = tags.get(tag)
    if values is None:
        if default is None:
            raise FormatError(f"missing required tag {TAG_NAMES[tag]}")
        return default
    return values[0]


def decode_tiff(buf):
    if buf[:2] == b"II":
        endian = "<"
    elif buf[:2] == b"MM":
        endian = ">"
    else:
        raise FormatError("not a TIFF file (bad byte-order mark)", offset=0)
    (magic,) = struct.unpack_from(endian + "H", buf, 2)
    if magic != 42:
        raise UnsupportedFormatError(f"TIFF version {magic} unsupported (BigTIFF?)")
    tags = _read_ifd(buf, endian)

    width = _one(tags, 256)
    height = _one(tags, 257)
    spp = _one(tags, 277, 1)
    bits = tags.get(258) or [1]
    if any(b != 16 for b in bits):
        raise UnsupportedFormatError(f"unsupported BitsPerSample {bits}; only 16-bit samples are read")
    if any(f != 1 for f in (tags.get(339) or [1])):
        raise UnsupportedFormatError(f"unsupported SampleFormat {tags[339]}; only unsigned integers are read")
    compression = _one(tags, 259, 1)
    if compression not in (1, 5):
        raise UnsupportedFormatError(f"unsupported Compression {compression}; only none (1) and LZW (5)")
    photometric = _one(tags, 262, 1)
    if photometric != 1:
        raise UnsupportedFormatError(f"unsupported PhotometricInterpretation {photometric}; only BlackIsZero (1)")
    if 322 in tags:
        raise UnsupportedFormatError("tiled TIFF (TileWidth) unsupported; strips only")
    predictor = _one(tags, 317, 1)
    if predictor not in (1, 2):
        raise UnsupportedFormatError(f"unsupported Predictor {predictor}")
    planar = _one(tags, 284, 1)
    if planar not in (1, 2):
        raise UnsupportedFormatError(f"unsupported PlanarConfiguration {planar}")
    offsets = tags.get(273)
    counts = tags.get(279)
    if not offsets or not counts or len(offsets) != len(counts):
        raise FormatError("missing or inconsistent StripOffsets / StripByteCounts")
    rows_per_strip = min(_one(tags, 278, height), height)

    planes = spp if planar == 2 else 1
    strip_spp = 1 if planar == 2 else spp
    strips_per_plane = -(-height // rows_per_strip)
    if len(offsets) != strips_per_plane * planes:
        raise FormatError(f"expected {strips_per_plane * planes} strips, found {len(offsets)}")

    dtype = np.dtype(endian + "u2")
    out = np.empty((planes, height, width, strip_spp), dtype=np.uint16)
    for s, (off, cnt) in enumerate(zip(offsets, counts)):
        if off + cnt > len(buf):
            raise FormatError(f"strip {s} extends past end of file", offset=off)
        raw = bytes(buf[off:off + cnt])
        if compression == 5:
            raw = lzw_decode(raw)
        plane, k = divmod(s, strips_per_plane)
        r0 = k * rows_per_strip
        rows = min(rows_per_strip, height - r0)
        need = rows * width * strip_spp * 2
        if len(raw) < need:
            raise DecodeError(f"strip {s} decodes to {len(raw)} bytes, need {need}", offset=off)
        block = np.frombuffer(raw, dtype=dtype, count=rows * width * strip_spp).reshape(rows, width, strip_spp)
        if predictor == 2:
            block = np.cumsum(block, axis=1, dtype=np.uint16)
        out[plane, r0:r0 + rows] = block

    samples = out[:, :, :, 0] if planar == 2 else out[0].transpose(2, 0, 1)
    samples = np.ascontiguousarray(samples, dtype=np.uint16)
    return Img16(width, height, samples.shape[0], samples)


def import_tiff(path, *more_paths):
    """Decode one or more TIFFs and concatenate their channels in argument order."""
    images = [decode_tiff(Path(p).read_bytes()) for p in (path, *more_paths)]
    first = images[0]
    for p, img in zip((path, *more_paths), images):
        if (img.width, img.height) != (first.width, first.height):
            raise FormatError(f"{p}: {img.width}x{img.height} does not match {first.width}x{first.height}")
    samples = np.concatenate([img.samples for img in images], axis=0)
    return Img16(first.width, first.height, samples.shape[0], samples)
