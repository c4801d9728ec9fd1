"""Enhancement chain applied before segmentation.

1. ``log_transform``  -- s = c * ln(1 + r), stretches faint structure.
2. ``erode``          -- grayscale erosion, strips bright point sources.
3. ``gaussian_smooth`` -- separable Gaussian low-pass for de-noising.

All borders use replicate (clamp-to-edge) padding so no artificial dark
frame is introduced around the image.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NonPositiveC, NonPositiveSigma
from .imgcore import as_image, window_reduce

DEFAULT_LOG_C = 1.0 / math.log(2.0)


def log_transform(img, c: float = DEFAULT_LOG_C) -> np.ndarray:
    """Apply ``c * ln(r + 1)`` pixelwise, clamped to [0, 1].

    With the default ``c = 1/ln 2`` the unit interval maps onto itself.
    """
    if not c > 0:
        raise NonPositiveC(f"c must be positive, got {c}")
    img = as_image(img)
    return np.clip(c * np.log1p(img), 0.0, 1.0)


@dataclass(frozen=True)
class StructuringElement:
    """Binary footprint anchored at its center cell."""

    mask: np.ndarray

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool)
        if mask.ndim != 2 or mask.shape[0] % 2 == 0 or mask.shape[1] % 2 == 0:
            raise ValueError(f"structuring element must have odd dimensions, got {mask.shape}")
        if not mask[mask.shape[0] // 2, mask.shape[1] // 2]:
            raise ValueError("structuring element center must be a member")
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)

    @classmethod
    def square(cls, size: int = 3) -> "StructuringElement":
        return cls(np.ones((size, size), dtype=bool))

    @classmethod
    def cross(cls, size: int = 3) -> "StructuringElement":
        m = np.zeros((size, size), dtype=bool)
        m[size // 2, :] = True
        m[:, size // 2] = True
        return cls(m)

    @classmethod
    def named(cls, shape: str, size: int) -> "StructuringElement":
        if shape == "square":
            return cls.square(size)
        if shape == "cross":
            return cls.cross(size)
        raise ValueError(f"unknown structuring element shape {shape!r}")

    @property
    def height(self) -> int:
        return self.mask.shape[0]

    @property
    def width(self) -> int:
        return self.mask.shape[1]

    def offsets(self):
        """(dy, dx) of every member relative to the center."""
        cy, cx = self.height // 2, self.width // 2
        return [(int(y) - cy, int(x) - cx) for y, x in zip(*np.nonzero(self.mask))]


def _is_full_rectangle(se: StructuringElement) -> bool:
    return bool(se.mask.all())


def erode(img, se: StructuringElement | None = None, iterations: int = 1) -> np.ndarray:
    """Grayscale erosion: each pixel becomes the minimum under the footprint."""
    out = as_image(img)
    if se is None:
        se = StructuringElement.square(3)
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    ry, rx = se.height // 2, se.width // 2
    h, w = out.shape
    for _ in range(iterations):
        if _is_full_rectangle(se):
            out = window_reduce(out, se.height, se.width, np.minimum)
        else:
            padded = np.pad(out, ((ry, ry), (rx, rx)), mode="edge")
            result = None
            for dy, dx in se.offsets():
                view = padded[ry + dy:ry + dy + h, rx + dx:rx + dx + w]
                result = view.copy() if result is None else np.minimum(result, view, out=result)
            out = result
    return out


@dataclass(frozen=True)
class GaussianKernel:
    sigma: float
    radius: int
    taps: np.ndarray


def gaussian_kernel(sigma: float) -> GaussianKernel:
    """Sampled 1-D Gaussian, radius ``ceil(3 sigma)``, renormalized to unit sum."""
    if not sigma > 0:
        raise NonPositiveSigma(f"sigma must be positive, got {sigma}")
    radius = max(1, math.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    g = np.exp(-(x * x) / (2.0 * sigma * sigma)) / math.sqrt(2.0 * math.pi * sigma * sigma)
    taps = g / g.sum()
    taps.setflags(write=False)
    return GaussianKernel(float(sigma), radius, taps)


def _convolve_axis(img: np.ndarray, taps: np.ndarray, axis: int) -> np.ndarray:
    r = len(taps) // 2
    n = img.shape[axis]
    pad = [(0, 0), (0, 0)]
    pad[axis] = (r, r)
    padded = np.pad(img, pad, mode="edge")
    out = np.zeros_like(img)
    # fixed tap order keeps the per-pixel summation sequence deterministic
    for k, t in enumerate(taps):
        if axis == 1:
            out += t * padded[:, k:k + n]
        else:
            out += t * padded[k:k + n, :]
    return out


def gaussian_smooth(img, sigma: float) -> np.ndarray:
    """Separable Gaussian blur: horizontal pass, then vertical pass."""
    kernel = gaussian_kernel(sigma)
    img = as_image(img)
    out = _convolve_axis(img, kernel.taps, axis=1)
    out = _convolve_axis(out, kernel.taps, axis=0)
    return np.clip(out, 0.0, 1.0)
