"""Raster exchange formats.

PLG1 layout: magic ``b"PLG1"``, little-endian uint32 ``rows, cols, channels``,
then ``rows*cols*channels`` little-endian float64 samples, channel-planar and
row-major. PNG files (8 or 16 bit, gray or RGB) map linearly onto ``[0, 1]``.
"""

from __future__ import annotations

import hashlib
import struct
from pathlib import Path

import cv2
import numpy as np

from .core import ImageGrid
from .exceptions import DataError

PLG_MAGIC = b"PLG1"
_PLG_HEADER = struct.Struct("<4sIII")


def write_plg(path, grid):
    if not isinstance(grid, ImageGrid):
        grid = ImageGrid(grid)
    header = _PLG_HEADER.pack(PLG_MAGIC, grid.rows, grid.cols, grid.channels)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(grid.data.astype("<f8").tobytes(order="C"))


def read_plg(path, peak=1.0):
    raw = Path(path).read_bytes()
    if len(raw) < _PLG_HEADER.size:
        raise DataError(f"{path}: truncated PLG1 header")
    magic, rows, cols, channels = _PLG_HEADER.unpack_from(raw)
    if magic != PLG_MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}")
    expected = rows * cols * channels * 8
    body = raw[_PLG_HEADER.size:]
    if len(body) != expected:
        raise DataError(f"{path}: expected {expected} data bytes, found {len(body)}")
    data = np.frombuffer(body, dtype="<f8").reshape(channels, rows, cols).astype(np.float64)
    return ImageGrid(data, peak=peak)


def read_png(path):
    img = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if img is None:
        raise DataError(f"{path}: not a readable PNG")
    if img.dtype == np.uint8:
        scale = 255.0
    elif img.dtype == np.uint16:
        scale = 65535.0
    else:
        raise DataError(f"{path}: unsupported PNG sample type {img.dtype}")
    if img.ndim == 3:
        img = img[..., :3][..., ::-1].transpose(2, 0, 1)
    return ImageGrid(img.astype(np.float64) / scale)


def write_png(path, grid, bits=8):
    if not isinstance(grid, ImageGrid):
        grid = ImageGrid(grid)
    if bits not in (8, 16):
        raise ValueError("bits must be 8 or 16")
    top = 255 if bits == 8 else 65535
    dtype = np.uint8 if bits == 8 else np.uint16
    scaled = np.clip(grid.data / grid.peak, 0.0, 1.0) * top
    img = np.rint(scaled).astype(dtype)
    if grid.channels == 1:
        img = img[0]
    else:
        img = np.ascontiguousarray(img.transpose(1, 2, 0)[..., ::-1])
    if not cv2.imwrite(str(path), img):
        raise DataError(f"{path}: PNG write failed")


def read_image(path, peak=1.0):
    path = Path(path)
    if path.suffix.lower() == ".png":
        return read_png(path)
    if path.suffix.lower() in (".plg", ".plg1"):
        return read_plg(path, peak=peak)
    raise DataError(f"{path}: unknown raster extension")


def write_image(path, grid):
    path = Path(path)
    if path.suffix.lower() == ".png":
        write_png(path, grid)
    else:
        write_plg(path, grid)


def sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()
