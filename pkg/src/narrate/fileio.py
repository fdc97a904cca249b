"""Bit-exact file transport: PNG (8/16-bit) and PFM codecs.

The PNG writer always emits filter-0 scanlines at a fixed zlib level, so
identical rasters produce identical bytes. PFM files are written
little-endian (scale -1.0), bottom-to-top per the format convention.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from .raster import (
    LINEAR,
    MAX_DIM,
    SRGB8,
    HeightField,
    Mask,
    NormalMap,
    RgbImage,
)

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"

# Decoded vectors shorter than this are treated as the unmasked sentinel.
SENTINEL_NORM = 0.5


class FormatError(ValueError):
    """File does not decode under the declared format."""


class UnsupportedDepthError(FormatError):
    """PNG sample depth differs from what the caller requires."""


# ---------------------------------------------------------------------------
# PNG primitives


def _png_chunk(tag: bytes, data: bytes) -> bytes:
    crc = zlib.crc32(tag + data) & 0xFFFFFFFF
    return struct.pack(">I", len(data)) + tag + data + struct.pack(">I", crc)


def encode_png_bytes(arr: np.ndarray) -> bytes:
    """Encode a (H, W) or (H, W, 3) uint8/uint16 array as PNG bytes."""
    if arr.dtype == np.uint8:
        depth = 8
    elif arr.dtype == np.uint16:
        depth = 16
    else:
        raise FormatError(f"PNG writer takes uint8/uint16, got {arr.dtype}")
    if arr.ndim == 2:
        color_type = 0
        channels = 1
    elif arr.ndim == 3 and arr.shape[2] == 3:
        color_type = 2
        channels = 3
    else:
        raise FormatError(f"PNG writer takes (H,W) or (H,W,3), got {arr.shape}")
    h, w = arr.shape[:2]
    if not (0 < w <= MAX_DIM and 0 < h <= MAX_DIM):
        raise FormatError(f"dimensions {w}x{h} outside (0, {MAX_DIM}]")

    ihdr = struct.pack(">IIBBBBB", w, h, depth, color_type, 0, 0, 0)
    samples = arr.reshape(h, w * channels)
    if depth == 16:
        samples = samples.astype(">u2")
    raw = bytearray()
    for row in samples:
        raw.append(0)  # filter byte: None
        raw.extend(row.tobytes())
    idat = zlib.compress(bytes(raw), 6)
    return (
        PNG_SIGNATURE
        + _png_chunk(b"IHDR", ihdr)
        + _png_chunk(b"IDAT", idat)
        + _png_chunk(b"IEND", b"")
    )


def write_png_array(arr: np.ndarray, path: str) -> None:
    """Write a (H, W) or (H, W, 3) uint8/uint16 array as a PNG file."""
    blob = encode_png_bytes(arr)
    with open(path, "wb") as f:
        f.write(blob)


def _unfilter_scanlines(raw: bytes, h: int, stride: int, bpp: int) -> bytearray:
    out = bytearray(h * stride)
    pos = 0
    prev_start = -1
    for y in range(h):
        ftype = raw[pos]
        pos += 1
        line = bytearray(raw[pos : pos + stride])
        pos += stride
        start = y * stride
        if ftype == 0:
            pass
        elif ftype == 1:  # Sub
            for i in range(bpp, stride):
                line[i] = (line[i] + line[i - bpp]) & 0xFF
        elif ftype == 2:  # Up
            if prev_start >= 0:
                for i in range(stride):
                    line[i] = (line[i] + out[prev_start + i]) & 0xFF
        elif ftype == 3:  # Average
            for i in range(stride):
                left = line[i - bpp] if i >= bpp else 0
                up = out[prev_start + i] if prev_start >= 0 else 0
                line[i] = (line[i] + ((left + up) >> 1)) & 0xFF
        elif ftype == 4:  # Paeth
            for i in range(stride):
                a = line[i - bpp] if i >= bpp else 0
                b = out[prev_start + i] if prev_start >= 0 else 0
                c = out[prev_start + i - bpp] if (prev_start >= 0 and i >= bpp) else 0
                p = a + b - c
                pa, pb, pc = abs(p - a), abs(p - b), abs(p - c)
                if pa <= pb and pa <= pc:
                    pred = a
                elif pb <= pc:
                    pred = b
                else:
                    pred = c
                line[i] = (line[i] + pred) & 0xFF
        else:
            raise FormatError(f"unknown PNG filter type {ftype}")
        out[start : start + stride] = line
        prev_start = start
    return out


def decode_png_bytes(blob: bytes, path: str = "<bytes>") -> np.ndarray:
    """Decode a non-interlaced gray/RGB PNG into a uint8/uint16 array."""
    if blob[:8] != PNG_SIGNATURE:
        raise FormatError(f"{path}: not a PNG file")
    pos = 8
    ihdr = None
    idat = bytearray()
    while pos + 8 <= len(blob):
        (length,) = struct.unpack(">I", blob[pos : pos + 4])
        tag = blob[pos + 4 : pos + 8]
        data = blob[pos + 8 : pos + 8 + length]
        if len(data) != length:
            raise FormatError(f"{path}: truncated chunk {tag!r}")
        pos += 12 + length
        if tag == b"IHDR":
            ihdr = struct.unpack(">IIBBBBB", data)
        elif tag == b"IDAT":
            idat.extend(data)
        elif tag == b"IEND":
            break
    if ihdr is None:
        raise FormatError(f"{path}: missing IHDR")
    w, h, depth, color_type, comp, filt, interlace = ihdr
    if interlace != 0:
        raise FormatError(f"{path}: interlaced PNG not supported")
    if comp != 0 or filt != 0:
        raise FormatError(f"{path}: unsupported compression/filter method")
    if color_type == 0:
        channels = 1
    elif color_type == 2:
        channels = 3
    else:
        raise FormatError(f"{path}: unsupported PNG color type {color_type}")
    if depth not in (8, 16):
        raise FormatError(f"{path}: unsupported bit depth {depth}")
    if not (0 < w <= MAX_DIM and 0 < h <= MAX_DIM):
        raise FormatError(f"{path}: dimensions {w}x{h} outside (0, {MAX_DIM}]")
    try:
        raw = zlib.decompress(bytes(idat))
    except zlib.error as e:
        raise FormatError(f"{path}: corrupt IDAT stream ({e})") from e
    sample_bytes = depth // 8
    stride = w * channels * sample_bytes
    bpp = channels * sample_bytes
    if len(raw) != h * (stride + 1):
        raise FormatError(f"{path}: scanline payload has wrong size")
    flat = _unfilter_scanlines(raw, h, stride, bpp)
    dtype = np.dtype(">u2") if depth == 16 else np.uint8
    arr = np.frombuffer(bytes(flat), dtype=dtype)
    arr = arr.astype(np.uint16 if depth == 16 else np.uint8)
    if channels == 1:
        return arr.reshape(h, w)
    return arr.reshape(h, w, 3)


def read_png_array(path: str) -> np.ndarray:
    """Read a non-interlaced gray/RGB PNG into a uint8/uint16 array."""
    with open(path, "rb") as f:
        blob = f.read()
    return decode_png_bytes(blob, path)


# ---------------------------------------------------------------------------
# Normal map transport (16-bit RGB PNG)


def encode_normals(n: NormalMap) -> np.ndarray:
    """Map unit vectors to uint16 via v = round((n+1)/2 * 65535); sentinel -> 0."""
    enc = np.round((n.normals + 1.0) / 2.0 * 65535.0).astype(np.uint16)
    enc[~n.mask] = 0
    return enc


def decode_normals(channels: np.ndarray) -> NormalMap:
    """Invert :func:`encode_normals`; short vectors and zero triples unmask.

    Decoded vectors are kept at their quantization-cell centers (within
    2e-5 of unit length) rather than renormalized: renormalizing can shift
    a component across a rounding boundary and break the bit-exact
    write(read(f)) == f guarantee.
    """
    vec = 2.0 * channels.astype(np.float64) / 65535.0 - 1.0
    norms = np.linalg.norm(vec, axis=2)
    zero_triple = np.all(channels == 0, axis=2)
    mask = (norms >= SENTINEL_NORM) & ~zero_triple
    vec = np.where(mask[..., None], vec, 0.0)
    return NormalMap(vec, mask)


def write_normal_png(n: NormalMap, path: str) -> None:
    write_png_array(encode_normals(n), path)


def read_normal_png(path: str) -> NormalMap:
    arr = read_png_array(path)
    if arr.ndim != 3:
        raise FormatError(f"{path}: normal map must be an RGB PNG")
    if arr.dtype != np.uint16:
        raise UnsupportedDepthError(
            f"{path}: normal maps require 16-bit RGB PNG, got 8-bit"
        )
    return decode_normals(arr)


# ---------------------------------------------------------------------------
# Color image and mask transport (8-bit PNG)


def write_image_png(img: RgbImage, path: str) -> None:
    """Write an sRGB-tagged image as an 8-bit RGB PNG."""
    if img.color_space != SRGB8:
        raise FormatError("write_image_png expects an srgb8-tagged image")
    arr = np.round(np.clip(img.pixels, 0.0, 1.0) * 255.0).astype(np.uint8)
    write_png_array(arr, path)


def read_image_png(path: str) -> RgbImage:
    arr = read_png_array(path)
    if arr.dtype != np.uint8:
        raise UnsupportedDepthError(f"{path}: color images must be 8-bit PNG")
    if arr.ndim == 2:
        arr = np.repeat(arr[..., None], 3, axis=2)
    return RgbImage(arr.astype(np.float64) / 255.0, SRGB8)


def write_mask_png(mask: Mask, path: str) -> None:
    write_png_array(np.where(mask.bits, 255, 0).astype(np.uint8), path)


def read_mask_png(path: str) -> Mask:
    arr = read_png_array(path)
    if arr.ndim == 3:
        arr = arr.max(axis=2)
    thresh = 32767 if arr.dtype == np.uint16 else 127
    return Mask(arr > thresh)


# ---------------------------------------------------------------------------
# PFM (float transport)


def _write_pfm_planes(planes: np.ndarray, path: str) -> None:
    if not np.all(np.isfinite(planes)):
        raise FormatError("PFM cannot carry non-finite values")
    h, w = planes.shape[:2]
    magic = b"PF" if planes.ndim == 3 else b"Pf"
    data = planes[::-1].astype("<f4").tobytes()  # bottom-to-top
    with open(path, "wb") as f:
        f.write(magic + b"\n")
        f.write(f"{w} {h}\n".encode())
        f.write(b"-1.0\n")
        f.write(data)


def write_pfm(value: "HeightField | RgbImage", path: str) -> None:
    """Write a HeightField as 1-channel PFM or an RgbImage as 3-channel PFM.

    Unmasked height pixels are written as 0.0; PFM carries no mask.
    """
    if isinstance(value, HeightField):
        z = np.where(value.mask, value.z, 0.0)
        _write_pfm_planes(z, path)
    elif isinstance(value, RgbImage):
        _write_pfm_planes(value.pixels, path)
    else:
        raise FormatError(f"cannot write {type(value).__name__} as PFM")


def read_pfm(path: str) -> "HeightField | RgbImage":
    """Read a PFM file: "Pf" yields a HeightField, "PF" a linear RgbImage."""
    with open(path, "rb") as f:
        blob = f.read()

    def next_token(pos: int) -> tuple[bytes, int]:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: truncated PFM header")
        return blob[start:pos], pos

    magic, pos = next_token(0)
    if magic not in (b"Pf", b"PF"):
        raise FormatError(f"{path}: bad PFM magic {magic!r}")
    wtok, pos = next_token(pos)
    htok, pos = next_token(pos)
    stok, pos = next_token(pos)
    try:
        w, h, scale = int(wtok), int(htok), float(stok)
    except ValueError as e:
        raise FormatError(f"{path}: malformed PFM header") from e
    if scale == 0.0:
        raise FormatError(f"{path}: PFM scale must be nonzero")
    if not (0 < w <= MAX_DIM and 0 < h <= MAX_DIM):
        raise FormatError(f"{path}: dimensions {w}x{h} outside (0, {MAX_DIM}]")
    pos += 1  # single whitespace byte after the scale line
    channels = 3 if magic == b"PF" else 1
    count = w * h * channels
    dtype = "<f4" if scale < 0 else ">f4"
    data = np.frombuffer(blob[pos : pos + count * 4], dtype=dtype)
    if data.size != count:
        raise FormatError(f"{path}: truncated PFM payload")
    if not np.all(np.isfinite(data)):
        raise FormatError(f"{path}: non-finite PFM values")
    planes = data.reshape((h, w, channels) if channels == 3 else (h, w))[::-1]
    if channels == 3:
        return RgbImage(planes.astype(np.float64), LINEAR)
    return HeightField(planes.astype(np.float64))
