from .img16 import Img16, decode_img16, encode_img16, normalize_u16, quantize_u16, read_img16, read_img16_raw, write_img16
from .manifest import (
    DatasetManifest,
    DatasetRecord,
    ManifestRecord,
    SyntheticManifest,
    read_manifest,
    split_manifest,
    write_manifest,
)
from .patches import patchify, reassemble
from .tiff import decode_tiff, import_tiff, lzw_decode

__all__ = [
    "DatasetManifest", "DatasetRecord", "Img16", "ManifestRecord", "SyntheticManifest",
    "decode_img16", "decode_tiff", "encode_img16", "import_tiff", "lzw_decode", "normalize_u16",
    "patchify", "quantize_u16", "read_img16", "read_img16_raw", "read_manifest", "reassemble",
    "split_manifest", "write_img16", "write_manifest",
]
