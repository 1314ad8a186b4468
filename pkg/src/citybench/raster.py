"""Minimal lossless PNG codec for the wire format.

Supports exactly the three raster kinds the protocol ships: 16-bit
grayscale (depth millimeters, segmentation ids) and 8-bit RGB.  The
encoder always emits filter type 0 and a fixed zlib level so identical
arrays produce identical bytes; the decoder handles all five standard
filters so foreign encoders remain readable.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

_SIGNATURE = b"\x89PNG\r\n\x1a\n"
_ZLIB_LEVEL = 6


class PngError(Exception):
    pass


def _chunk(tag: bytes, payload: bytes) -> bytes:
    return (struct.pack(">I", len(payload)) + tag + payload
            + struct.pack(">I", zlib.crc32(tag + payload) & 0xFFFFFFFF))


def encode_gray16(arr: np.ndarray) -> bytes:
    if arr.ndim != 2 or arr.dtype != np.uint16:
        raise PngError("gray16 encoder needs a 2-D uint16 array")
    h, w = arr.shape
    ihdr = struct.pack(">IIBBBBB", w, h, 16, 0, 0, 0, 0)
    raw = arr.astype(">u2").tobytes()
    stride = w * 2
    scanlines = b"".join(b"\x00" + raw[y * stride:(y + 1) * stride] for y in range(h))
    return (_SIGNATURE + _chunk(b"IHDR", ihdr)
            + _chunk(b"IDAT", zlib.compress(scanlines, _ZLIB_LEVEL))
            + _chunk(b"IEND", b""))


def encode_rgb8(arr: np.ndarray) -> bytes:
    if arr.ndim != 3 or arr.shape[2] != 3 or arr.dtype != np.uint8:
        raise PngError("rgb8 encoder needs an (H, W, 3) uint8 array")
    h, w, _ = arr.shape
    ihdr = struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0)
    raw = np.ascontiguousarray(arr).tobytes()
    stride = w * 3
    scanlines = b"".join(b"\x00" + raw[y * stride:(y + 1) * stride] for y in range(h))
    return (_SIGNATURE + _chunk(b"IHDR", ihdr)
            + _chunk(b"IDAT", zlib.compress(scanlines, _ZLIB_LEVEL))
            + _chunk(b"IEND", b""))


def decode(data: bytes) -> np.ndarray:
    """Decode to uint16 (H, W) for grayscale or uint8 (H, W, 3) for RGB."""
    if data[:8] != _SIGNATURE:
        raise PngError("not a PNG stream")
    pos = 8
    ihdr = None
    idat = bytearray()
    while pos < len(data):
        if pos + 8 > len(data):
            raise PngError("truncated chunk header")
        (length,) = struct.unpack(">I", data[pos:pos + 4])
        tag = data[pos + 4:pos + 8]
        payload = data[pos + 8:pos + 8 + length]
        if len(payload) != length:
            raise PngError("truncated chunk payload")
        (crc,) = struct.unpack(">I", data[pos + 8 + length:pos + 12 + length])
        if crc != (zlib.crc32(tag + payload) & 0xFFFFFFFF):
            raise PngError(f"bad CRC in {tag!r}")
        if tag == b"IHDR":
            ihdr = struct.unpack(">IIBBBBB", payload)
        elif tag == b"IDAT":
            idat.extend(payload)
        elif tag == b"IEND":
            break
        pos += 12 + length
    if ihdr is None:
        raise PngError("missing IHDR")
    w, h, bit_depth, color_type, comp, filt, interlace = ihdr
    if comp != 0 or filt != 0 or interlace != 0:
        raise PngError("unsupported compression/filter/interlace method")
    if (bit_depth, color_type) == (16, 0):
        bpp, stride = 2, w * 2
    elif (bit_depth, color_type) == (8, 2):
        bpp, stride = 3, w * 3
    else:
        raise PngError(f"unsupported format: depth {bit_depth}, color type {color_type}")
    raw = zlib.decompress(bytes(idat))
    if len(raw) != h * (stride + 1):
        raise PngError("decompressed size mismatch")
    out = bytearray(h * stride)
    prev_start = None
    for y in range(h):
        ftype = raw[y * (stride + 1)]
        line = bytearray(raw[y * (stride + 1) + 1:(y + 1) * (stride + 1)])
        if ftype == 0:
            pass
        elif ftype == 1:  # sub
            for i in range(bpp, stride):
                line[i] = (line[i] + line[i - bpp]) & 0xFF
        elif ftype == 2:  # up
            if prev_start is not None:
                for i in range(stride):
                    line[i] = (line[i] + out[prev_start + i]) & 0xFF
        elif ftype == 3:  # average
            for i in range(stride):
                a = line[i - bpp] if i >= bpp else 0
                b = out[prev_start + i] if prev_start is not None else 0
                line[i] = (line[i] + (a + b) // 2) & 0xFF
        elif ftype == 4:  # paeth
            for i in range(stride):
                a = line[i - bpp] if i >= bpp else 0
                b = out[prev_start + i] if prev_start is not None else 0
                c = out[prev_start + i - bpp] if (prev_start is not None and i >= bpp) else 0
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
            raise PngError(f"unknown filter type {ftype}")
        out[y * stride:(y + 1) * stride] = line
        prev_start = y * stride
    if color_type == 0:
        return np.frombuffer(bytes(out), dtype=">u2").reshape(h, w).astype(np.uint16)
    return np.frombuffer(bytes(out), dtype=np.uint8).reshape(h, w, 3).copy()
