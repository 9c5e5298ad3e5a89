"""Baseline sequential JPEG round trip (lossy stages only).

Entropy coding is lossless and is skipped: the decoded pixels depend only on
colour conversion, the 8x8 DCT, quantisation and the inverse path, all of
which are reproduced here. Chroma is kept at 4:4:4.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

# ITU T.81 Annex K, natural (row-major) order
LUMINANCE_TABLE = np.array([
    16, 11, 10, 16, 24, 40, 51, 61,
    12, 12, 14, 19, 26, 58, 60, 55,
    14, 13, 16, 24, 40, 57, 69, 56,
    14, 17, 22, 29, 51, 87, 80, 62,
    18, 22, 37, 56, 68, 109, 103, 77,
    24, 35, 55, 64, 81, 104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101,
    72, 92, 95, 98, 112, 100, 103, 99,
], dtype=np.int64).reshape(8, 8)

CHROMINANCE_TABLE = np.array([
    17, 18, 24, 47, 99, 99, 99, 99,
    18, 21, 26, 66, 99, 99, 99, 99,
    24, 26, 56, 99, 99, 99, 99, 99,
    47, 66, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
], dtype=np.int64).reshape(8, 8)


def quality_scale(quality: int) -> int:
    """Percentage scale applied to the base tables (100 means unscaled)."""
    if not 1 <= quality <= 100:
        raise ValueError(f"JPEG quality must be in [1, 100], got {quality}")
    return 5000 // quality if quality < 50 else 200 - 2 * quality


def scaled_table(base: np.ndarray, quality: int) -> np.ndarray:
    scale = quality_scale(quality)
    return np.clip((base * scale + 50) // 100, 1, 255)


def _dct_matrix() -> np.ndarray:
    u = np.arange(8)[:, None]
    x = np.arange(8)[None, :]
    m = np.cos((2 * x + 1) * u * np.pi / 16) * np.sqrt(2 / 8)
    m[0] /= np.sqrt(2)
    return m


_DCT = _dct_matrix()


def _round_half_away(v: np.ndarray) -> np.ndarray:
    return np.copysign(np.floor(np.abs(v) + 0.5), v)


def _to_u8(v: np.ndarray) -> np.ndarray:
    return np.minimum(np.maximum(_round_half_away(v), 0.0), 255.0)


def _rgb_to_ycbcr(rgb: np.ndarray) -> np.ndarray:
    r, g, b = rgb
    y = 0.299 * r + 0.587 * g + 0.114 * b
    cb = -0.168736 * r - 0.331264 * g + 0.5 * b + 128.0
    cr = 0.5 * r - 0.418688 * g - 0.081312 * b + 128.0
    return _to_u8(np.stack([y, cb, cr]))


def _ycbcr_to_rgb(ycc: np.ndarray) -> np.ndarray:
    y, cb, cr = ycc[0], ycc[1] - 128.0, ycc[2] - 128.0
    r = y + 1.402 * cr
    g = y - 0.344136 * cb - 0.714136 * cr
    b = y + 1.772 * cb
    return _to_u8(np.stack([r, g, b]))


@lru_cache(maxsize=None)
def _plane_tables(quality: int, channels: int) -> np.ndarray:
    luma = scaled_table(LUMINANCE_TABLE, quality)
    chroma = scaled_table(CHROMINANCE_TABLE, quality)
    return np.stack([luma] + [chroma] * (channels - 1)).astype(np.float64)[:, None, None]


def _code_planes(planes: np.ndarray, tables: np.ndarray) -> np.ndarray:
    """Quantise and reconstruct 8-bit planes of shape (C, 8a, 8b); ``tables`` is (C, 1, 1, 8, 8)."""
    c, h, w = planes.shape
    blocks = (planes - 128.0).reshape(c, h // 8, 8, w // 8, 8).transpose(0, 1, 3, 2, 4)
    coef = _DCT @ blocks @ _DCT.T
    q = _round_half_away(coef / tables)
    rec = _DCT.T @ (q * tables) @ _DCT
    rec = rec.transpose(0, 1, 3, 2, 4).reshape(c, h, w)
    return _to_u8(rec + 128.0)


def jpeg_roundtrip_u8(img: np.ndarray, quality: int) -> np.ndarray:
    """Round trip an 8-bit ``(C, H, W)`` image (C in {1, 3}); returns 8-bit values."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[0] not in (1, 3):
        raise ValueError(f"expected a (1|3, H, W) image, got shape {img.shape}")
    c, h, w = img.shape
    ph, pw = -h % 8, -w % 8
    padded = np.pad(img, ((0, 0), (0, ph), (0, pw)), mode="edge") if ph or pw else img
    planes = _rgb_to_ycbcr(padded) if c == 3 else padded
    coded = _code_planes(planes, _plane_tables(int(quality), c))
    out = _ycbcr_to_rgb(coded) if c == 3 else coded
    return out[:, :h, :w]


def jpeg_transform(x: np.ndarray, quality: int) -> np.ndarray:
    """JPEG-compress a ``[0, 1]`` image and decode it back to ``[0, 1]``."""
    quality_scale(quality)
    u8 = _to_u8(np.asarray(x, dtype=np.float64) * 255.0)
    return jpeg_roundtrip_u8(u8, int(quality)) / 255.0
