"""Image buffers, PPM (P6) codec, resizing and channel normalization.

PPM is the mandatory format and round-trips bit-exactly. PNG goes through
Pillow when it is installed; without it, ``.png`` paths raise
:class:`ImageFormatError`.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ImageFormatError

MEAN = (0.485, 0.456, 0.406)
STD = (0.229, 0.224, 0.225)

SRGB8 = "srgb-8bit"
NORMALIZED = "normalized-f32"


@dataclass
class ImageBuffer:
    """H x W x 3 pixel array plus its colorspace tag."""

    rgb: np.ndarray
    colorspace: str = SRGB8

    def __post_init__(self):
        if self.rgb.ndim != 3 or self.rgb.shape[2] != 3:
            raise ImageFormatError(f"expected HxWx3 pixels, got {self.rgb.shape}")
        if self.colorspace == SRGB8:
            if self.rgb.dtype != np.uint8:
                raise ImageFormatError("srgb-8bit buffers must be uint8")
        elif self.colorspace == NORMALIZED:
            if not np.isfinite(self.rgb).all():
                raise ImageFormatError("normalized buffer holds non-finite values")
        else:
            raise ImageFormatError(f"unknown colorspace {self.colorspace!r}")

    @property
    def width(self) -> int:
        return self.rgb.shape[1]

    @property
    def height(self) -> int:
        return self.rgb.shape[0]


# ---------------------------------------------------------------------------
# PPM


_WS = b" \t\n\r\x0b\x0c"


def _header_token(data: bytes, pos: int) -> tuple[bytes, int]:
    while True:
        while pos < len(data) and data[pos] in _WS:
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        break
    start = pos
    while pos < len(data) and data[pos] not in _WS and data[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise ImageFormatError("truncated PPM header", start)
    return data[start:pos], pos


def decode_ppm(data: bytes) -> ImageBuffer:
    if data[:2] != b"P6":
        raise ImageFormatError("not a binary PPM (missing P6 magic)", 0)
    pos = 2
    fields = []
    for label in ("width", "height", "maxval"):
        start = pos
        token, pos = _header_token(data, pos)
        if not token.isdigit():
            raise ImageFormatError(f"bad PPM {label} {token!r}", start)
        fields.append(int(token))
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise ImageFormatError("PPM dimensions must be positive", 2)
    if maxval != 255:
        raise ImageFormatError(f"only maxval 255 is supported, got {maxval}", pos)
    if pos >= len(data) or data[pos] not in _WS:
        raise ImageFormatError("missing whitespace after PPM header", pos)
    pos += 1
    need = width * height * 3
    have = len(data) - pos
    if have < need:
        raise ImageFormatError(f"truncated PPM payload: {have} of {need} bytes", len(data))
    rgb = np.frombuffer(data, dtype=np.uint8, count=need, offset=pos).reshape(height, width, 3)
    return ImageBuffer(rgb.copy())


def encode_ppm(buf: ImageBuffer) -> bytes:
    if buf.colorspace != SRGB8:
        raise ImageFormatError("only srgb-8bit buffers can be saved")
    header = f"P6\n{buf.width} {buf.height}\n255\n".encode("ascii")
    return header + np.ascontiguousarray(buf.rgb).tobytes()


def load(path: str | os.PathLike) -> ImageBuffer:
    path = os.fspath(path)
    if path.lower().endswith(".png"):
        return _load_png(path)
    with open(path, "rb") as f:
        return decode_ppm(f.read())


def save(buf: ImageBuffer, path: str | os.PathLike) -> None:
    path = os.fspath(path)
    if path.lower().endswith(".png"):
        _save_png(buf, path)
        return
    data = encode_ppm(buf)
    with open(path, "wb") as f:
        f.write(data)


def _pillow():
    try:
        from PIL import Image
    except ImportError:  # pragma: no cover - depends on environment
        raise ImageFormatError("PNG support needs Pillow (pip install 'artifact[png]')") from None
    return Image


def _load_png(path: str) -> ImageBuffer:
    Image = _pillow()
    try:
        with Image.open(path) as im:
            rgb = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except OSError as exc:
        raise ImageFormatError(f"cannot decode PNG {path}: {exc}") from exc
    return ImageBuffer(rgb.copy())


def _save_png(buf: ImageBuffer, path: str) -> None:
    if buf.colorspace != SRGB8:
        raise ImageFormatError("only srgb-8bit buffers can be saved")
    Image = _pillow()
    Image.fromarray(buf.rgb, mode="RGB").save(path, format="PNG")


# ---------------------------------------------------------------------------
# normalization


def _stats(dtype):
    mean = np.asarray(MEAN, dtype=dtype)[:, None, None]
    std = np.asarray(STD, dtype=dtype)[:, None, None]
    return mean, std


def normalize(buf: ImageBuffer) -> T.Tensor:
    """8-bit RGB -> 1x3xHxW tensor, ``(x/255 - mean) / std`` per channel."""
    dtype = T.get_dtype()
    mean, std = _stats(dtype)
    x = buf.rgb.transpose(2, 0, 1).astype(dtype) / dtype(255.0)
    return T.Tensor(((x - mean) / std)[None], dtype=dtype)


def _round_half_up(x: np.ndarray) -> np.ndarray:
    return np.floor(x + 0.5)


def denormalize_float(x) -> np.ndarray:
    """Normalized tensor/array -> HxWx3 float array in [0, 1]."""
    data = x.data if isinstance(x, T.Tensor) else np.asarray(x)
    data = data.reshape(3, data.shape[-2], data.shape[-1]).astype(np.float64)
    mean, std = _stats(np.float64)
    return np.clip(data * std + mean, 0.0, 1.0).transpose(1, 2, 0)


def denormalize(x) -> ImageBuffer:
    """Inverse of :func:`normalize`, clamped and rounded half-up to 8 bits."""
    data = x.data if isinstance(x, T.Tensor) else np.asarray(x)
    data = data.reshape(3, data.shape[-2], data.shape[-1]).astype(np.float64)
    mean, std = _stats(np.float64)
    v = _round_half_up((data * std + mean) * 255.0)
    return ImageBuffer(np.clip(v, 0, 255).astype(np.uint8).transpose(1, 2, 0).copy())


def pixel_bounds(dtype=None) -> tuple[np.ndarray, np.ndarray]:
    """Normalized values of pixel 0 and pixel 255, shaped 1x3x1x1."""
    lo = normalize(ImageBuffer(np.zeros((1, 1, 3), np.uint8))).data
    hi = normalize(ImageBuffer(np.full((1, 1, 3), 255, np.uint8))).data
    if dtype is not None:
        lo, hi = lo.astype(dtype), hi.astype(dtype)
    return lo, hi


# ---------------------------------------------------------------------------
# resizing


def resize(buf: ImageBuffer, width: int, height: int, mode: str = "bilinear") -> ImageBuffer:
    """Resample to ``width x height`` with pixel-center alignment."""
    if width < 1 or height < 1:
        raise ValueError("target size must be at least 1x1")
    if (width, height) == (buf.width, buf.height):
        return ImageBuffer(buf.rgb.copy(), buf.colorspace)
    src = buf.rgb.astype(np.float64)
    if mode == "nearest":
        ys = np.minimum(((np.arange(height) + 0.5) * buf.height / height).astype(int), buf.height - 1)
        xs = np.minimum(((np.arange(width) + 0.5) * buf.width / width).astype(int), buf.width - 1)
        out = src[ys][:, xs]
    elif mode == "bilinear":
        def axis(n_out, n_in):
            pos = np.clip((np.arange(n_out) + 0.5) * n_in / n_out - 0.5, 0, n_in - 1)
            i0 = np.floor(pos).astype(int)
            i1 = np.minimum(i0 + 1, n_in - 1)
            return i0, i1, pos - i0

        y0, y1, fy = axis(height, buf.height)
        x0, x1, fx = axis(width, buf.width)
        fx = fx[None, :, None]
        top = src[y0][:, x0] * (1 - fx) + src[y0][:, x1] * fx
        bottom = src[y1][:, x0] * (1 - fx) + src[y1][:, x1] * fx
        fy = fy[:, None, None]
        out = top * (1 - fy) + bottom * fy
    else:
        raise ValueError(f"unknown resize mode {mode!r}")
    if buf.colorspace == SRGB8:
        out = np.clip(_round_half_up(out), 0, 255).astype(np.uint8)
    else:
        out = out.astype(buf.rgb.dtype)
    return ImageBuffer(np.ascontiguousarray(out), buf.colorspace)
