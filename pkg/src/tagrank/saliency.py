"""Spectral-residual saliency on grayscale grids, plus minimal PGM I/O."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

WORK_SIDE = 64
LOG_EPS = 1e-8
BLUR_SIGMA = 2.5
BLUR_RADIUS = 4  # 9x9 kernel


@dataclass(frozen=True)
class SaliencyMap:
    values: np.ndarray  # (height, width), in [0, 1]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @classmethod
    def uniform(cls, width: int, height: int) -> SaliencyMap:
        return cls(np.ones((height, width)))


def resize_bilinear(img: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Bilinear resampling with pixel-center alignment."""
    h, w = img.shape
    oh, ow = shape
    if (oh, ow) == (h, w):
        return img.copy()
    ys = (np.arange(oh) + 0.5) * (h / oh) - 0.5
    xs = (np.arange(ow) + 0.5) * (w / ow) - 0.5
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    return ndimage.map_coordinates(img, [yy, xx], order=1, mode="nearest")


def _normalize(m: np.ndarray) -> np.ndarray:
    lo, hi = m.min(), m.max()
    if hi - lo <= 0:
        return np.zeros_like(m)
    return np.clip((m - lo) / (hi - lo), 0.0, 1.0)


def spectral_residual_saliency(gray) -> SaliencyMap:
    """Saliency from the residual of the log-amplitude spectrum.

    The grid is shrunk so its longest side is at most 64, the spectral
    residual (log amplitude minus its 3x3 mean) is recombined with the
    original phase and inverted, squared, blurred, and brought back to the
    input size. A grid with no contrast has no salient content and maps to
    all zeros.
    """
    img = np.asarray(gray, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError("saliency input must be a 2-D intensity grid")
    if min(img.shape) < 8:
        raise ValueError(f"saliency input must be at least 8x8, got {img.shape}")
    if not np.all(np.isfinite(img)):
        raise ValueError("saliency input contains non-finite values")
    h, w = img.shape
    if img.max() == img.min():
        return SaliencyMap(np.zeros((h, w)))

    side = max(h, w)
    if side > WORK_SIDE:
        small_shape = (max(1, round(h * WORK_SIDE / side)), max(1, round(w * WORK_SIDE / side)))
        work = resize_bilinear(img, small_shape)
    else:
        work = img

    spectrum = np.fft.fft2(work)
    log_amp = np.log(np.abs(spectrum) + LOG_EPS)
    phase = np.angle(spectrum)
    # the spectrum is periodic, so the local mean wraps around
    residual = log_amp - ndimage.uniform_filter(log_amp, size=3, mode="wrap")
    sal = np.abs(np.fft.ifft2(np.exp(residual + 1j * phase))) ** 2
    sal = ndimage.gaussian_filter(sal, BLUR_SIGMA, truncate=BLUR_RADIUS / BLUR_SIGMA, mode="reflect")
    if sal.shape != (h, w):
        sal = resize_bilinear(sal, (h, w))
    return SaliencyMap(_normalize(sal))


# --------------------------------------------------------------------------
# 8-bit binary PGM (P5)


def _pgm_tokens(data: bytes, count: int):
    tokens, i = [], 0
    while len(tokens) < count:
        while i < len(data) and data[i:i + 1].isspace():
            i += 1
        if data[i:i + 1] == b"#":
            while i < len(data) and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < len(data) and not data[j:j + 1].isspace():
            j += 1
        if j == i:
            raise ValueError("truncated PGM header")
        tokens.append(data[i:j])
        i = j
    return tokens, i + 1  # one whitespace byte separates header and raster


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    (magic, w, h, maxval), start = _pgm_tokens(data, 4)
    if magic != b"P5":
        raise ValueError(f"{path}: only binary PGM (P5) is supported")
    w, h, maxval = int(w), int(h), int(maxval)
    if not (0 < maxval < 256):
        raise ValueError(f"{path}: only 8-bit PGM is supported")
    raster = data[start:start + w * h]
    if len(raster) != w * h:
        raise ValueError(f"{path}: truncated raster")
    return np.frombuffer(raster, dtype=np.uint8).reshape(h, w).astype(np.float64)


def write_pgm(path, gray) -> None:
    """Write a grid to 8-bit PGM; float input in [0, 1] is scaled to 0..255."""
    arr = np.asarray(gray)
    if arr.dtype != np.uint8:
        arr = np.clip(np.rint(np.asarray(arr, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)
    h, w = arr.shape
    Path(path).write_bytes(b"P5\n%d %d\n255\n" % (w, h) + arr.tobytes())
