"""Minimal deterministic image and depth-map serialization.

PNG output is produced by a tiny encoder (one IDAT chunk, fixed zlib level,
no ancillary chunks) so identical pixel data always yields identical bytes.
"""

from __future__ import annotations

import json
import struct
import zlib

import numpy as np


def encode_png(image: np.ndarray) -> bytes:
    """Encode an HxWx3 uint8 array as deterministic PNG bytes."""
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
        raise ValueError(f"expected HxWx3 uint8 image, got {img.shape} {img.dtype}")
    h, w = img.shape[:2]

    def chunk(tag: bytes, payload: bytes) -> bytes:
        return (
            struct.pack(">I", len(payload))
            + tag
            + payload
            + struct.pack(">I", zlib.crc32(tag + payload) & 0xFFFFFFFF)
        )

    ihdr = struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0)  # 8-bit RGB
    raw = b"".join(b"\x00" + img[row].tobytes() for row in range(h))
    idat = zlib.compress(raw, 6)
    return (
        b"\x89PNG\r\n\x1a\n"
        + chunk(b"IHDR", ihdr)
        + chunk(b"IDAT", idat)
        + chunk(b"IEND", b"")
    )


def decode_png(data: bytes) -> np.ndarray:
    """Decode PNGs produced by encode_png (8-bit RGB, filter 0 rows)."""
    if data[:8] != b"\x89PNG\r\n\x1a\n":
        raise ValueError("not a PNG")
    pos = 8
    width = height = None
    idat = b""
    while pos < len(data):
        (length,) = struct.unpack(">I", data[pos : pos + 4])
        tag = data[pos + 4 : pos + 8]
        payload = data[pos + 8 : pos + 8 + length]
        if tag == b"IHDR":
            width, height, depth, ctype = struct.unpack(">IIBB", payload[:10])
            if depth != 8 or ctype != 2:
                raise ValueError("only 8-bit RGB supported")
        elif tag == b"IDAT":
            idat += payload
        pos += 12 + length
    raw = zlib.decompress(idat)
    stride = width * 3 + 1
    rows = []
    for r in range(height):
        row = raw[r * stride : (r + 1) * stride]
        if row[0] != 0:
            raise ValueError("only filter type 0 supported")
        rows.append(np.frombuffer(row[1:], dtype=np.uint8))
    return np.stack(rows).reshape(height, width, 3)


def write_png(path, image: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(encode_png(image))


def write_ppm(path, image: np.ndarray) -> None:
    """Binary P6 PPM."""
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
        raise ValueError(f"expected HxWx3 uint8 image, got {img.shape} {img.dtype}")
    h, w = img.shape[:2]
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode())
        f.write(img.tobytes())


def write_depth(bin_path, header_path, depth: np.ndarray) -> None:
    """Flat little-endian float32 buffer plus a JSON header."""
    d = np.asarray(depth, dtype="<f4")
    d.tofile(bin_path)
    with open(header_path, "w") as f:
        json.dump({"H": d.shape[0], "W": d.shape[1], "dtype": "float32"}, f)


def read_depth(bin_path, header_path) -> np.ndarray:
    with open(header_path) as f:
        hdr = json.load(f)
    return np.fromfile(bin_path, dtype="<f4").reshape(hdr["H"], hdr["W"]).astype(np.float64)
