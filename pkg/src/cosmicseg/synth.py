"""Seeded synthetic star fields with known ground truth.

A field is a sloped sky background plus Gaussian noise, with three kinds of
sources laid on top:

* blobs   -- round Gaussian profiles (the objects a detector should keep);
* streaks -- thick straight trails (satellite / cosmic-ray artifacts);
* points  -- single hot pixels (what erosion is meant to strip).

Only blobs enter the truth mask.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Blob:
    x: float
    y: float
    sigma: float
    amplitude: float


@dataclass
class Streak:
    x0: float
    y0: float
    x1: float
    y1: float
    half_width: float
    amplitude: float


@dataclass
class SynthField:
    image: np.ndarray  # [0, 1]
    truth: np.ndarray  # bool, blob footprints only
    blobs: list[Blob] = field(default_factory=list)
    streaks: list[Streak] = field(default_factory=list)
    points: list[tuple[int, int]] = field(default_factory=list)


# a blob pixel is "true" where its profile exceeds this fraction of the peak
TRUTH_LEVEL = 0.25


def _blob_profile(yy, xx, b: Blob) -> np.ndarray:
    r2 = (xx - b.x) ** 2 + (yy - b.y) ** 2
    return b.amplitude * np.exp(-r2 / (2.0 * b.sigma ** 2))


def _streak_profile(yy, xx, s: Streak) -> np.ndarray:
    dx, dy = s.x1 - s.x0, s.y1 - s.y0
    length2 = dx * dx + dy * dy
    t = np.clip(((xx - s.x0) * dx + (yy - s.y0) * dy) / length2, 0.0, 1.0)
    px = s.x0 + t * dx
    py = s.y0 + t * dy
    dist = np.hypot(xx - px, yy - py)
    # flat core with a one-pixel soft edge
    return s.amplitude * np.clip(s.half_width + 0.5 - dist, 0.0, 1.0)


def star_field(
    shape=(128, 128),
    n_blobs: int = 6,
    seed: int = 0,
    n_streaks: int = 0,
    n_points: int = 0,
    noise: float = 0.02,
    sigma_range=(1.5, 4.0),
    amplitude_range=(0.45, 0.85),
    margin: int = 6,
) -> SynthField:
    """Render a field; blobs are placed without overlapping each other."""
    rng = np.random.default_rng(seed)
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)

    # sloped sky, never below 0 before noise
    base = rng.uniform(0.12, 0.18)
    gx, gy = rng.uniform(-0.06, 0.06, size=2)
    image = base + gx * (xx / max(w - 1, 1)) + gy * (yy / max(h - 1, 1))

    truth = np.zeros(shape, dtype=bool)
    blobs: list[Blob] = []
    tries = 0
    while len(blobs) < n_blobs and tries < 1000 * max(n_blobs, 1):
        tries += 1
        sigma = rng.uniform(*sigma_range)
        pad = margin + 3 * sigma
        if w - 2 * pad <= 0 or h - 2 * pad <= 0:
            break
        b = Blob(rng.uniform(pad, w - pad), rng.uniform(pad, h - pad), sigma,
                 rng.uniform(*amplitude_range))
        if any(np.hypot(b.x - o.x, b.y - o.y) < 3.5 * (b.sigma + o.sigma) for o in blobs):
            continue
        blobs.append(b)
        prof = _blob_profile(yy, xx, b)
        image += prof
        truth |= prof >= TRUTH_LEVEL * b.amplitude

    streaks: list[Streak] = []
    tries = 0
    while len(streaks) < n_streaks and tries < 1000 * max(n_streaks, 1):
        tries += 1
        length = rng.uniform(14, 30)
        angle = rng.uniform(0, np.pi)
        cx, cy = rng.uniform(margin + length / 2, w - margin - length / 2), \
            rng.uniform(margin + length / 2, h - margin - length / 2)
        dx, dy = 0.5 * length * np.cos(angle), 0.5 * length * np.sin(angle)
        s = Streak(cx - dx, cy - dy, cx + dx, cy + dy, rng.uniform(1.0, 2.0),
                   rng.uniform(*amplitude_range))
        prof = _streak_profile(yy, xx, s)
        # keep artifacts clear of the blobs so every region has one true class
        near_blob = any(
            np.hypot(b.x - px, b.y - py) < 4 * b.sigma + s.half_width + 4
            for b in blobs
            for px, py in zip(np.linspace(s.x0, s.x1, 12), np.linspace(s.y0, s.y1, 12))
        )
        if near_blob:
            continue
        streaks.append(s)
        image += prof

    points = []
    for _ in range(n_points):
        py, px = int(rng.integers(0, h)), int(rng.integers(0, w))
        image[py, px] = 1.0
        points.append((py, px))

    image += rng.normal(0.0, noise, size=shape)
    image = np.clip(image, 0.0, 1.0)
    return SynthField(image, truth, blobs, streaks, points)
