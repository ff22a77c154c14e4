"""Readers and writers for Middlebury ``.flo`` files and PGM/PPM/PNG images."""

from __future__ import annotations

import os

import numpy as np

from .flowfield import FlowField

__all__ = [
    "FLO_MAGIC",
    "FormatError",
    "BadMagicError",
    "BadDimensionsError",
    "TruncatedDataError",
    "UnsupportedFormatError",
    "read_flo",
    "write_flo",
    "read_image",
    "write_image",
]

FLO_MAGIC = 202021.25
_FLO_TAG = b"PIEH"
LUMA = (0.299, 0.587, 0.114)


class FormatError(ValueError):
    """Malformed or unsupported file content."""


class BadMagicError(FormatError):
    pass


class BadDimensionsError(FormatError):
    pass


class TruncatedDataError(FormatError):
    pass


class UnsupportedFormatError(FormatError):
    pass


def read_flo(path):
    """Read a Middlebury ``.flo`` file; unknown-flow sentinels are kept as is."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 12:
        raise TruncatedDataError(f"{path}: header shorter than 12 bytes")
    magic = np.frombuffer(data, "<f4", count=1)[0]
    if magic != np.float32(FLO_MAGIC):
        raise BadMagicError(f"{path}: bad magic {magic!r}, expected {FLO_MAGIC}")
    w, h = (int(x) for x in np.frombuffer(data, "<i4", count=2, offset=4))
    if w <= 0 or h <= 0 or w > 100_000 or h > 100_000:
        raise BadDimensionsError(f"{path}: implausible size {w}x{h}")
    n = 2 * w * h
    if len(data) < 12 + 4 * n:
        raise TruncatedDataError(f"{path}: expected {n} samples, file holds {(len(data) - 12) // 4}")
    arr = np.frombuffer(data, "<f4", count=n, offset=12).reshape(h, w, 2)
    return FlowField(arr[..., 0].astype(np.float64), arr[..., 1].astype(np.float64))


def write_flo(flow, path):
    """Write ``flow`` as little-endian float32 ``.flo``."""
    h, w = flow.shape
    if h == 0 or w == 0:
        raise BadDimensionsError("cannot write an empty flow field")
    body = np.stack([flow.u, flow.v], axis=-1).astype("<f4")
    with open(path, "wb") as fh:
        fh.write(_FLO_TAG)
        fh.write(np.array([w, h], dtype="<i4").tobytes())
        fh.write(body.tobytes())


def _netpbm_tokens(data, count):
    """Parse ``count`` whitespace-separated header tokens, skipping comments."""
    tokens = []
    pos = 0
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise TruncatedDataError("header ends early")
        tokens.append(data[start:pos])
    # exactly one whitespace byte separates header and raster
    return tokens, pos + 1


def _read_netpbm(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] not in (b"P5", b"P6"):
        raise UnsupportedFormatError(f"{path}: not a binary PGM/PPM file")
    tokens, offset = _netpbm_tokens(data, 4)
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise BadDimensionsError(f"{path}: non-numeric header field") from None
    if w <= 0 or h <= 0:
        raise BadDimensionsError(f"{path}: bad size {w}x{h}")
    if maxval != 255:
        raise UnsupportedFormatError(f"{path}: only maxval 255 is supported, got {maxval}")
    channels = 1 if tokens[0] == b"P5" else 3
    n = w * h * channels
    raster = np.frombuffer(data, np.uint8, count=min(n, max(len(data) - offset, 0)), offset=min(offset, len(data)))
    if raster.size < n:
        raise TruncatedDataError(f"{path}: expected {n} bytes of pixel data, got {raster.size}")
    arr = raster.reshape(h, w) if channels == 1 else raster.reshape(h, w, 3)
    return arr.astype(np.float64)


def _to_gray(arr):
    if arr.ndim == 2:
        return arr
    return arr[..., 0] * LUMA[0] + arr[..., 1] * LUMA[1] + arr[..., 2] * LUMA[2]


def read_image(path, gray=True):
    """Read a PGM/PPM (P5/P6, 8 bit) or PNG image as floats in ``[0, 255]``.

    Colour images are converted with the weights (0.299, 0.587, 0.114)
    unless ``gray`` is False.
    """
    path = os.fspath(path)
    with open(path, "rb") as fh:
        head = fh.read(8)
    if head[:2] in (b"P5", b"P6"):
        arr = _read_netpbm(path)
    elif head == b"\x89PNG\r\n\x1a\n":
        from PIL import Image

        try:
            with Image.open(path) as im:
                if im.mode not in ("L", "RGB", "RGBA", "P", "LA"):
                    raise UnsupportedFormatError(f"{path}: PNG mode {im.mode} not supported")
                im = im.convert("L" if im.mode in ("L", "LA") else "RGB")
                arr = np.asarray(im, dtype=np.float64)
        except (OSError, SyntaxError) as exc:
            # Pillow signals broken streams with these
            raise TruncatedDataError(f"{path}: unreadable PNG ({exc})") from None
    else:
        raise UnsupportedFormatError(f"{path}: unrecognised image format")
    return _to_gray(arr) if gray else arr


def write_image(img, path):
    """Write a gray ``(H, W)`` or RGB ``(H, W, 3)`` image.

    Values are rounded and clipped to ``0..255``. The format follows the
    suffix: ``.pgm``/``.ppm`` are written directly, ``.png`` via Pillow.
    """
    path = os.fspath(path)
    arr = np.asarray(img)
    if arr.dtype != np.uint8:
        arr = np.clip(np.rint(arr), 0, 255).astype(np.uint8)
    if arr.ndim not in (2, 3) or (arr.ndim == 3 and arr.shape[2] != 3):
        raise BadDimensionsError(f"cannot write image of shape {arr.shape}")
    ext = os.path.splitext(path)[1].lower()
    if ext in (".pgm", ".ppm", ".pnm"):
        if ext == ".pgm" and arr.ndim == 3:
            arr = np.clip(np.rint(_to_gray(arr.astype(float))), 0, 255).astype(np.uint8)
        if ext == ".ppm" and arr.ndim == 2:
            arr = np.repeat(arr[..., None], 3, axis=2)
        magic = b"P5" if arr.ndim == 2 else b"P6"
        h, w = arr.shape[:2]
        with open(path, "wb") as fh:
            fh.write(magic + f"\n{w} {h}\n255\n".encode("ascii"))
            fh.write(np.ascontiguousarray(arr).tobytes())
    elif ext == ".png":
        from PIL import Image

        Image.fromarray(arr).save(path)
    else:
        raise UnsupportedFormatError(f"{path}: unsupported output suffix {ext!r}")
