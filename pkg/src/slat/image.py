"""Image containers, masks, label maps and file I/O.

Pixel data is stored channel-planar as a float64 array of shape
(channels, height, width), C-contiguous, so per-channel work in the
smoothing stage is a cheap slice. Intensity images live in [0, 1].

Supported raster formats are binary PPM (P6) and PGM (P5) plus PNG via
Pillow. Lossless float interchange (notably the 6-channel feature cache
produced by the lifting stage) uses the SLAT container:

    magic "SLAT" | version u16 | height u32 | width u32 | channels u16
    | payload: float64 little-endian, channel-planar row-major

All header integers are little-endian.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, ValidationError

SLAT_MAGIC = b"SLAT"
SLAT_VERSION = 1
_HEADER = struct.Struct("<4sHIIH")


@dataclass(frozen=True)
class Image:
    """Multi-channel raster with data of shape (channels, height, width)."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[None, :, :]
        if arr.ndim != 3:
            raise ValidationError(f"image data must be 2-D or 3-D, got shape {arr.shape}")
        if arr.shape[1] < 1 or arr.shape[2] < 1 or arr.shape[0] < 1:
            raise ValidationError(f"empty image of shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("image contains NaN or Inf values")
        object.__setattr__(self, "data", arr)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def channel(self, i: int) -> np.ndarray:
        return self.data[i]

    def interleaved(self) -> np.ndarray:
        """Return an (H, W, C) view copy for pixel-major consumers."""
        return np.moveaxis(self.data, 0, -1).copy()

    @staticmethod
    def from_interleaved(arr: np.ndarray) -> "Image":
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim == 2:
            return Image(arr)
        return Image(np.moveaxis(arr, -1, 0))


@dataclass(frozen=True)
class Mask:
    """Per-channel binary field marking the pixels where data is known."""

    bits: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.bits).astype(bool)
        if arr.ndim == 2:
            arr = arr[None, :, :]
        if arr.ndim != 3:
            raise ValidationError(f"mask bits must be 2-D or 3-D, got shape {arr.shape}")
        counts = arr.reshape(arr.shape[0], -1).sum(axis=1)
        if np.any(counts == 0):
            empty = int(np.argmin(counts))
            raise ValidationError(f"mask channel {empty} has no known pixels")
        object.__setattr__(self, "bits", arr)

    @property
    def channels(self) -> int:
        return self.bits.shape[0]

    @property
    def height(self) -> int:
        return self.bits.shape[1]

    @property
    def width(self) -> int:
        return self.bits.shape[2]

    def channel(self, i: int) -> np.ndarray:
        # Per-channel weights as floats, ready for pointwise products.
        return self.bits[min(i, self.channels - 1)].astype(np.float64)

    def matches(self, img: Image) -> bool:
        return (self.height, self.width) == (img.height, img.width) and self.channels in (
            1,
            img.channels,
        )

    @staticmethod
    def full(height: int, width: int, channels: int = 1) -> "Mask":
        return Mask(np.ones((channels, height, width), dtype=bool))


@dataclass(frozen=True)
class LabelMap:
    """Integer phase labels in {1, ..., k} covering an (H, W) grid."""

    labels: np.ndarray
    k: int

    def __post_init__(self):
        arr = np.ascontiguousarray(self.labels, dtype=np.int32)
        if arr.ndim != 2:
            raise ValidationError(f"label map must be 2-D, got shape {arr.shape}")
        if self.k < 1:
            raise ValidationError("phase count k must be >= 1")
        if arr.size and (arr.min() < 1 or arr.max() > self.k):
            raise ValidationError(f"labels outside 1..{self.k}")
        object.__setattr__(self, "labels", arr)

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    def effective_k(self) -> int:
        """Number of labels actually present (may be < k if a cluster died)."""
        return int(np.unique(self.labels).size)


def _atomic_write(path, payload: bytes):
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(payload)
    os.replace(tmp, path)


def _read_pnm_token(fh) -> bytes:
    # Tokens are separated by whitespace; '#' starts a comment to end of line.
    tok = b""
    while True:
        c = fh.read(1)
        if not c:
            raise FormatError("truncated PNM header")
        if c == b"#":
            while c not in (b"\n", b""):
                c = fh.read(1)
            continue
        if c.isspace():
            if tok:
                return tok
            continue
        tok += c


def _load_pnm(path) -> Image:
    with open(path, "rb") as fh:
        magic = fh.read(2)
        if magic not in (b"P5", b"P6"):
            raise FormatError(f"{path}: not a binary PGM/PPM file (magic {magic!r})")
        width = int(_read_pnm_token(fh))
        height = int(_read_pnm_token(fh))
        maxval = int(_read_pnm_token(fh))
        if maxval != 255:
            raise FormatError(f"{path}: unsupported bit depth (maxval {maxval}, want 255)")
        channels = 3 if magic == b"P6" else 1
        n = width * height * channels
        payload = fh.read(n)
        if len(payload) != n:
            raise FormatError(f"{path}: truncated pixel payload")
    flat = np.frombuffer(payload, dtype=np.uint8).astype(np.float64) / 255.0
    planar = np.moveaxis(flat.reshape(height, width, channels), -1, 0)
    return Image(planar)


def _quantize(img: Image) -> np.ndarray:
    lo, hi = float(img.data.min()), float(img.data.max())
    if lo < 0.0 or hi > 1.0:
        raise ValidationError(f"values outside [0, 1] (range [{lo:.4g}, {hi:.4g}]); rescale first")
    # round-half-up so 0.5 * 255 = 127.5 -> 128
    return np.floor(img.data * 255.0 + 0.5).astype(np.uint8)


def _save_pnm(img: Image, path):
    if img.channels not in (1, 3):
        raise ValidationError(f"raster output needs 1 or 3 channels, got {img.channels}")
    bytes8 = _quantize(img)
    magic = b"P6" if img.channels == 3 else b"P5"
    header = b"%s\n%d %d\n255\n" % (magic, img.width, img.height)
    interleaved = np.moveaxis(bytes8, 0, -1)
    _atomic_write(path, header + interleaved.tobytes())


def load_image(path) -> Image:
    """Read an 8-bit raster (PGM/PPM/PNG) as intensities in [0, 1] (v / 255)."""
    path = os.fspath(path)
    if not os.path.exists(path):
        raise FormatError(f"no such file: {path}")
    if path.lower().endswith(".png"):
        from PIL import Image as PILImage

        with PILImage.open(path) as im:
            if im.mode not in ("L", "RGB"):
                im = im.convert("RGB" if "A" in im.mode or len(im.mode) > 2 else "L")
            arr = np.asarray(im, dtype=np.float64) / 255.0
        return Image.from_interleaved(arr)
    return _load_pnm(path)


def save_image(img: Image, path):
    """Write an 8-bit raster; values must already lie in [0, 1]."""
    path = os.fspath(path)
    if path.lower().endswith(".png"):
        from PIL import Image as PILImage

        bytes8 = _quantize(img)
        if img.channels == 1:
            pil = PILImage.fromarray(bytes8[0], mode="L")
        elif img.channels == 3:
            pil = PILImage.fromarray(np.moveaxis(bytes8, 0, -1), mode="RGB")
        else:
            raise ValidationError(f"raster output needs 1 or 3 channels, got {img.channels}")
        tmp = f"{path}.tmp.{os.getpid()}"
        pil.save(tmp, format="PNG")
        os.replace(tmp, path)
        return
    _save_pnm(img, path)


def save_raw(img: Image, path):
    """Write the lossless SLAT float container (any channel count)."""
    header = _HEADER.pack(SLAT_MAGIC, SLAT_VERSION, img.height, img.width, img.channels)
    payload = np.ascontiguousarray(img.data, dtype="<f8").tobytes()
    _atomic_write(os.fspath(path), header + payload)


def load_raw(path) -> Image:
    """Read a SLAT container; raises FormatError on any structural damage."""
    path = os.fspath(path)
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise FormatError(f"{path}: truncated header")
        magic, version, height, width, channels = _HEADER.unpack(head)
        if magic != SLAT_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        if version != SLAT_VERSION:
            raise FormatError(f"{path}: unsupported container version {version}")
        n = height * width * channels * 8
        payload = fh.read(n + 1)
        if len(payload) != n:
            raise FormatError(f"{path}: payload size mismatch")
    data = np.frombuffer(payload, dtype="<f8").reshape(channels, height, width)
    return Image(data)


def save_labels(labels: "LabelMap", path):
    """Write a label map as an 8-bit PGM whose raw bytes are the labels."""
    if labels.k > 255:
        raise ValidationError(f"cannot store {labels.k} labels in an 8-bit raster")
    header = b"P5\n%d %d\n255\n" % (labels.width, labels.height)
    _atomic_write(os.fspath(path), header + labels.labels.astype(np.uint8).tobytes())


def load_labels(path) -> LabelMap:
    """Read a label PGM written by save_labels; k is the largest label seen."""
    img = _load_pnm(os.fspath(path))
    if img.channels != 1:
        raise FormatError(f"{path}: label maps must be single-channel")
    arr = np.floor(img.data[0] * 255.0 + 0.5).astype(np.int32)
    if arr.min() < 1:
        raise FormatError(f"{path}: label value {arr.min()} outside 1..255")
    return LabelMap(arr, int(arr.max()))


def rescale_to_unit(img: Image) -> Image:
    """Affinely map each channel onto [0, 1]; constant channels become zero."""
    out = np.zeros_like(img.data)
    for c in range(img.channels):
        chan = img.data[c]
        lo, hi = chan.min(), chan.max()
        if hi > lo:
            out[c] = (chan - lo) / (hi - lo)
    return Image(out)
