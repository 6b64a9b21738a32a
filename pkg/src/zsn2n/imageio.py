"""Image files: 8-bit PNG/PGM/PPM and an unclipped float container.

Images in memory are float32 arrays of shape (C, H, W), C in {1, 3}.

Float container (``.zsf``), all little-endian::

    bytes 0-3    magic b"ZSF1"
    bytes 4-15   uint32 channels, height, width
    bytes 16-    float32 samples, channel-major planar (C, then H, then W)

It exists because noisy images leave [0, 1] and clipping them would bias
zero-mean noise.
"""

from __future__ import annotations

import os
import struct

import numpy as np
from PIL import Image, UnidentifiedImageError

FLOAT_MAGIC = b"ZSF1"
FLOAT_SUFFIX = ".zsf"
EIGHT_BIT_SUFFIXES = (".png", ".pgm", ".ppm", ".pnm")


class ImageFormatError(ValueError):
    pass


def is_float_path(path) -> bool:
    return os.fspath(path).lower().endswith(FLOAT_SUFFIX)


def write_float_image(img: np.ndarray, path) -> None:
    img = _check_chw(img)
    header = FLOAT_MAGIC + struct.pack("<III", *img.shape)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(img, dtype="<f4").tobytes())


def read_float_image(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != FLOAT_MAGIC or len(blob) < 16:
        raise ImageFormatError(f"{path}: not a float image (bad magic)")
    c, h, w = struct.unpack("<III", blob[4:16])
    expected = 16 + 4 * c * h * w
    if len(blob) != expected:
        raise ImageFormatError(f"{path}: expected {expected} bytes for {c}x{h}x{w}, got {len(blob)}")
    return np.frombuffer(blob, dtype="<f4", offset=16).reshape(c, h, w).astype(np.float32)


def load_image(path) -> np.ndarray:
    """Load an image as float32 (C, H, W); 8-bit files are scaled to [0, 1]."""
    path = os.fspath(path)
    try:
        with open(path, "rb") as fh:
            magic = fh.read(4)
    except OSError as exc:
        raise ImageFormatError(f"cannot read {path}: {exc.strerror}") from exc
    if magic == FLOAT_MAGIC:
        return read_float_image(path)
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode not in ("L", "RGB"):
                raise ImageFormatError(
                    f"{path}: unsupported pixel format {mode!r} ({im.format}); "
                    "only 8-bit grayscale or RGB images are accepted"
                )
            arr = np.asarray(im, dtype=np.uint8)
    except UnidentifiedImageError as exc:
        raise ImageFormatError(f"{path}: not a PNG/PGM/PPM image") from exc
    if arr.ndim == 2:
        arr = arr[None]
    else:
        arr = arr.transpose(2, 0, 1)
    return arr.astype(np.float32) / np.float32(255.0)


def to_uint8(img: np.ndarray) -> np.ndarray:
    return np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def save_image(img: np.ndarray, path) -> None:
    """Write an image; ``.zsf`` keeps floats, anything else is clamped to 8 bits."""
    img = _check_chw(img)
    if is_float_path(path):
        write_float_image(img, path)
        return
    if not os.fspath(path).lower().endswith(EIGHT_BIT_SUFFIXES):
        raise ImageFormatError(f"{path}: unknown image extension, use .png, .pgm, .ppm or .zsf")
    if img.shape[0] not in (1, 3):
        raise ImageFormatError(f"8-bit output needs 1 or 3 channels, got {img.shape[0]}")
    q = to_uint8(img)
    pil = Image.fromarray(q[0], "L") if q.shape[0] == 1 else Image.fromarray(q.transpose(1, 2, 0), "RGB")
    if os.fspath(path).lower().endswith((".pgm", ".ppm", ".pnm")):
        pil.save(path, format="PPM")
    else:
        pil.save(path, format="PNG")


def center_crop(img: np.ndarray, size: int) -> np.ndarray:
    c, h, w = img.shape
    if size > h or size > w:
        raise ValueError(f"cannot crop {size}x{size} from {h}x{w} image")
    top, left = (h - size) // 2, (w - size) // 2
    return np.ascontiguousarray(img[:, top : top + size, left : left + size])


def _check_chw(img):
    img = np.asarray(img)
    if img.ndim != 3:
        raise ImageFormatError(f"expected a (C, H, W) image, got shape {img.shape}")
    return img
