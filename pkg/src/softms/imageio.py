"""Image and artifact I/O: PGM/PPM/PNG in, PGM/PNG/CSV/JSON/raw out.

Intensities are normalized to [0, 1] on load.  Grayscale images are (H, W)
arrays; color images are returned channel-first as (3, H, W).  The raw float
ownership format is little-endian float32, row-major, with a 16-byte header:
magic ``SOFP``, u32 width, u32 height, u32 channel index.
"""

from __future__ import annotations

import io
import json
import re
import struct

import numpy as np
from PIL import Image

RAW_MAGIC = b"SOFP"

# fixed maximally-distinct label palette; wraps for K > 12
PALETTE = [
    (230, 25, 75), (60, 180, 75), (255, 225, 25), (0, 130, 200),
    (245, 130, 48), (145, 30, 180), (70, 240, 240), (240, 50, 230),
    (210, 245, 60), (250, 190, 212), (0, 128, 128), (154, 99, 36),
]


class ImageFormatError(ValueError):
    pass


def _read_pnm(data: bytes) -> np.ndarray:
    magic = data[:2]
    if magic not in (b"P2", b"P3", b"P5", b"P6"):
        raise ImageFormatError(f"unsupported PNM magic {magic!r}")
    # strip comments, then tokenize the header
    pos = 2
    tokens = []
    while len(tokens) < 3:
        m = re.match(rb"(?:\s+|#[^\n]*\n)*([0-9]+)", data[pos:])
        if not m:
            raise ImageFormatError("truncated PNM header")
        tokens.append(int(m.group(1)))
        pos += m.end()
    width, height, maxval = tokens
    if maxval <= 0 or maxval > 65535:
        raise ImageFormatError(f"bad PNM maxval {maxval}")
    channels = 3 if magic in (b"P3", b"P6") else 1
    count = width * height * channels
    if magic in (b"P2", b"P3"):
        vals = np.array(data[pos:].split()[:count], dtype=float)
        if vals.size != count:
            raise ImageFormatError("truncated PNM data")
    else:
        pos += 1  # single whitespace after maxval
        dtype = ">u2" if maxval > 255 else "u1"
        vals = np.frombuffer(data, dtype=dtype, count=count, offset=pos).astype(float)
    vals = vals.reshape(height, width, channels) / maxval
    return vals[:, :, 0] if channels == 1 else np.moveaxis(vals, -1, 0)


def decode_image(data: bytes) -> np.ndarray:
    """Decode PNG/PGM/PPM bytes into a normalized float image."""
    if not data:
        raise ImageFormatError("empty image payload")
    if data[:1] == b"P" and data[1:2] in b"2356":
        return _read_pnm(data)
    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except Exception as exc:
        raise ImageFormatError(f"unreadable image: {exc}") from exc
    if img.mode in ("L", "I", "I;16", "1"):
        arr = np.asarray(img.convert("I"), dtype=float)
        return arr / max(arr.max(), 1.0) if arr.max() > 255 else np.asarray(
            img.convert("L"), dtype=float) / 255.0
    arr = np.asarray(img.convert("RGB"), dtype=float) / 255.0
    return np.moveaxis(arr, -1, 0)


def read_image(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return decode_image(fh.read())


def write_pgm(path, values: np.ndarray) -> None:
    """Write a [0, 1] field as an 8-bit binary PGM."""
    arr = np.rint(np.clip(np.asarray(values, dtype=float), 0.0, 1.0) * 255.0)
    arr = arr.astype(np.uint8)
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(arr.tobytes())


def quantize8(values: np.ndarray) -> np.ndarray:
    return np.rint(np.clip(np.asarray(values, dtype=float), 0.0, 1.0) * 255.0
                   ).astype(np.uint8)


def labels_png_bytes(labels: np.ndarray, k: int) -> bytes:
    """Indexed-palette PNG of a 1..K label map."""
    labels = np.asarray(labels)
    img = Image.fromarray((labels - 1).astype(np.uint8), mode="P")
    pal = []
    for i in range(max(k, 1)):
        pal.extend(PALETTE[i % len(PALETTE)])
    img.putpalette(pal)
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def write_labels_png(path, labels: np.ndarray, k: int) -> None:
    with open(path, "wb") as fh:
        fh.write(labels_png_bytes(labels, k))


def palette_json(k: int) -> list:
    return [{"label": i + 1, "rgb": list(PALETTE[i % len(PALETTE)])}
            for i in range(k)]


def gray_png_bytes(values: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(quantize8(values), mode="L").save(buf, format="PNG")
    return buf.getvalue()


def write_raw_ownership(path, values: np.ndarray, channel: int) -> None:
    """Bit-exact float32 ownership dump (header: SOFP, width, height, channel)."""
    arr = np.asarray(values, dtype="<f4")
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(RAW_MAGIC)
        fh.write(struct.pack("<III", w, h, channel))
        fh.write(arr.tobytes())


def read_raw_ownership(path) -> tuple:
    with open(path, "rb") as fh:
        header = fh.read(16)
        if len(header) != 16 or header[:4] != RAW_MAGIC:
            raise ImageFormatError("not a raw ownership file")
        w, h, channel = struct.unpack("<III", header[4:])
        data = np.frombuffer(fh.read(4 * w * h), dtype="<f4").reshape(h, w)
    return data.copy(), channel


def write_json(path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
