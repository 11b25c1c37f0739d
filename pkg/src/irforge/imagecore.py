"""Image buffers, binary masks, morphology and region statistics.

Images are 2-D ``float64`` numpy arrays indexed ``[row, col]`` (``[y, x]``),
masks are 2-D ``bool`` arrays and label maps are 2-D small-integer arrays.
Gray levels stay in double precision until export.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import AssetError, DimensionMismatch, EmptyMask, OutOfFrame

IRF_MAGIC = b"IRF1"
_IRF_HEADER = struct.Struct("<4sIII")


@dataclass(frozen=True)
class RegionStats:
    """Surface (pixel count), mean and population standard deviation of a region."""

    surface: int
    mean: float
    std: float

    def to_dict(self):
        return {"surface": self.surface, "mean": self.mean, "std": self.std}


def as_image(data, name="image") -> np.ndarray:
    img = np.asarray(data, dtype=np.float64)
    if img.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got shape {img.shape}")
    if not np.all(np.isfinite(img)):
        raise ValueError(f"{name} contains non-finite values")
    return img


def as_mask(data, name="mask") -> np.ndarray:
    mask = np.asarray(data)
    if mask.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got shape {mask.shape}")
    return mask.astype(bool, copy=False)


def _same_shape(a, b, what="mask"):
    if a.shape != b.shape:
        raise DimensionMismatch(f"{what} shape {b.shape} does not match {a.shape}")


def region_stats(img, mask) -> RegionStats:
    img = np.asarray(img, dtype=np.float64)
    mask = as_mask(mask)
    _same_shape(img, mask)
    values = img[mask]
    if values.size == 0:
        raise EmptyMask("statistics requested on an empty mask")
    mean = values.mean()
    # two-pass: subtract the mean before squaring
    std = np.sqrt(np.mean((values - mean) ** 2))
    return RegionStats(int(values.size), float(mean), float(std))


def disc(radius: float) -> np.ndarray:
    """Euclidean disc structuring element: offsets with distance <= radius."""
    r = int(np.floor(radius))
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
    return (xx * xx + yy * yy) <= radius * radius


def dilation_ring(silhouette, radius: float) -> np.ndarray:
    """Pixels within Euclidean ``radius`` of the silhouette, excluding the silhouette."""
    if radius < 1:
        raise ValueError("radius must be >= 1")
    sil = as_mask(silhouette, "silhouette")
    if not sil.any():
        return np.zeros_like(sil)
    grown = ndimage.binary_dilation(sil, structure=disc(radius))
    return grown & ~sil


_MASK_OPS = {
    "and": np.logical_and,
    "or": np.logical_or,
    "andnot": lambda a, b: a & ~b,
}


def mask_ops(a, b, op: str) -> np.ndarray:
    a = as_mask(a, "a")
    b = as_mask(b, "b")
    _same_shape(a, b)
    try:
        fn = _MASK_OPS[op]
    except KeyError:
        raise ValueError(f"unknown mask op {op!r}; expected one of {sorted(_MASK_OPS)}") from None
    return fn(a, b)


def shift_mask(mask, offset, frame_shape) -> np.ndarray:
    """Place ``mask`` into an empty frame with its top-left corner at ``offset`` = (dx, dy).

    Raises OutOfFrame if any set pixel would land outside the frame.
    """
    mask = as_mask(mask)
    dx, dy = (int(v) for v in offset)
    H, W = frame_shape
    ys, xs = np.nonzero(mask)
    out = np.zeros((H, W), dtype=bool)
    if ys.size == 0:
        return out
    ys = ys + dy
    xs = xs + dx
    if ys.min() < 0 or xs.min() < 0 or ys.max() >= H or xs.max() >= W:
        raise OutOfFrame(f"mask at offset {(dx, dy)} leaves the {W}x{H} frame")
    out[ys, xs] = True
    return out


def blit(dst, src, src_mask, offset) -> np.ndarray:
    """Copy masked ``src`` pixels into a copy of ``dst`` translated by ``offset`` = (dx, dy)."""
    dst = np.asarray(dst, dtype=np.float64)
    src = np.asarray(src, dtype=np.float64)
    src_mask = as_mask(src_mask, "src_mask")
    _same_shape(src, src_mask, "src_mask")
    dx, dy = (int(v) for v in offset)
    out = dst.copy()
    ys, xs = np.nonzero(src_mask)
    if ys.size == 0:
        return out
    ty, tx = ys + dy, xs + dx
    H, W = dst.shape
    if ty.min() < 0 or tx.min() < 0 or ty.max() >= H or tx.max() >= W:
        raise OutOfFrame(f"blit at offset {(dx, dy)} leaves the {W}x{H} destination")
    out[ty, tx] = src[ys, xs]
    return out


def apply_affine(img, gain: float, offset: float, mask=None) -> np.ndarray:
    """Return ``gain * img + offset``, restricted to ``mask`` when given."""
    img = np.asarray(img, dtype=np.float64)
    if mask is None:
        return gain * img + offset
    mask = as_mask(mask)
    _same_shape(img, mask)
    out = img.copy()
    out[mask] = gain * img[mask] + offset
    return out


# --------------------------------------------------------------------------- IO


def read_irf(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < _IRF_HEADER.size:
        raise AssetError(f"{path}: truncated IRF header")
    magic, width, height, _reserved = _IRF_HEADER.unpack_from(raw)
    if magic != IRF_MAGIC:
        raise AssetError(f"{path}: bad magic {magic!r}")
    expected = _IRF_HEADER.size + 8 * width * height
    if len(raw) != expected:
        raise AssetError(f"{path}: expected {expected} bytes, found {len(raw)}")
    data = np.frombuffer(raw, dtype="<f8", offset=_IRF_HEADER.size)
    return data.reshape(height, width).astype(np.float64)


def write_irf(path, img) -> None:
    img = as_image(img)
    h, w = img.shape
    header = _IRF_HEADER.pack(IRF_MAGIC, w, h, 0)
    Path(path).write_bytes(header + np.ascontiguousarray(img, dtype="<f8").tobytes())


def _read_raster(path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise AssetError(f"{path}: no such file")
    try:
        with Image.open(path) as im:
            if im.mode not in ("L", "I", "I;16", "I;16B", "I;16L", "1", "P"):
                raise AssetError(f"{path}: expected a grayscale raster, got mode {im.mode}")
            if im.mode == "P":
                im = im.convert("L")
            return np.array(im)
    except AssetError:
        raise
    except Exception as exc:  # PIL raises a zoo of exception types
        raise AssetError(f"{path}: {exc}") from exc


def load_image(path, scale: float = 1.0, offset: float = 0.0) -> np.ndarray:
    """Load a PNG/PGM (8/16-bit) or IRF raster as gray levels ``scale * raw + offset``."""
    path = Path(path)
    if path.suffix.lower() == ".irf":
        raw = read_irf(path)
    else:
        raw = _read_raster(path).astype(np.float64)
    return scale * raw + offset


def save_raster(path, data) -> None:
    """Write an integer raster (uint8 or uint16) as PNG or PGM, chosen by suffix."""
    data = np.asarray(data)
    if data.dtype not in (np.uint8, np.uint16):
        raise TypeError(f"expected uint8 or uint16 raster, got {data.dtype}")
    path = Path(path)
    suffix = path.suffix.lower()
    fmt = {".png": "PNG", ".pgm": "PPM"}.get(suffix)
    if fmt is None:
        raise ValueError(f"unsupported raster suffix {suffix!r}")
    Image.fromarray(np.ascontiguousarray(data)).save(path, format=fmt)


def load_mask(path) -> np.ndarray:
    """Load an 8-bit mask; any nonzero code is 'inside'."""
    return _read_raster(path) > 0


def save_mask(path, mask) -> None:
    """Write a mask as 8-bit with codes 0 (outside) and 255 (inside)."""
    save_raster(path, np.where(as_mask(mask), 255, 0).astype(np.uint8))


def load_labels(path) -> np.ndarray:
    return _read_raster(path).astype(np.uint8)
