"""Threshold segmentation and connected-component extraction.

Two binarization paths are provided:

* a global threshold refined by the isodata iteration
  ``T_{k+1} = (mean(pixels <= T_k) + mean(pixels > T_k)) / 2``, starting from
  the image midrange, with a full per-iteration trace;
* a local adaptive threshold comparing each pixel with the midrange of its
  ``window x window`` neighbourhood.

Foreground is always ``value > threshold`` (strict), so constant images
segment to pure background.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import ndimage

from .errors import ConstantImage, EmptyClass
from .imgcore import as_image, as_mask, window_reduce

DEFAULT_EPSILON = 1e-4
DEFAULT_MAX_ITER = 100
DEFAULT_WINDOW = 15


@dataclass(frozen=True)
class TraceStep:
    iteration: int
    threshold: float
    error: float


@dataclass
class ThresholdTrace:
    """Per-iteration record of a threshold refinement."""

    t0: float
    steps: list[TraceStep] = field(default_factory=list)
    converged: bool = False
    stop_reason: str = ""

    @classmethod
    def from_thresholds(cls, thresholds: Sequence[float], epsilon: float = DEFAULT_EPSILON):
        """Rebuild a trace from a threshold column ``[t0, T1, T2, ...]``.

        Errors are recomputed from the recurrence, which makes this the
        validator for externally reported sequences.
        """
        if len(thresholds) < 1:
            raise ValueError("need at least the initial threshold")
        trace = cls(float(thresholds[0]))
        prev = trace.t0
        for k, t in enumerate(thresholds[1:], start=1):
            trace.steps.append(TraceStep(k, float(t), abs(float(t) - prev)))
            prev = float(t)
        trace.converged = bool(trace.steps) and trace.steps[-1].error < epsilon
        trace.stop_reason = "converged" if trace.converged else "replayed"
        return trace

    @property
    def thresholds(self) -> list[float]:
        return [s.threshold for s in self.steps]

    @property
    def errors(self) -> list[float]:
        return [s.error for s in self.steps]

    @property
    def final_threshold(self) -> float:
        return self.steps[-1].threshold if self.steps else self.t0

    def recurrence_residuals(self) -> list[float]:
        """``|recorded error - |T_k - T_{k-1}||`` for every step (0 when consistent)."""
        out = []
        prev = self.t0
        for s in self.steps:
            out.append(abs(s.error - abs(s.threshold - prev)))
            prev = s.threshold
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["iteration", "threshold", "error"])
        for s in self.steps:
            writer.writerow([s.iteration, f"{s.threshold:.4f}", f"{s.error:.4f}"])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "t0": self.t0,
            "converged": self.converged,
            "stop_reason": self.stop_reason,
            "steps": [
                {"iteration": s.iteration, "threshold": s.threshold, "error": s.error}
                for s in self.steps
            ],
        }


def initial_threshold(img) -> float:
    """Midrange ``(min + max) / 2`` of the image intensities."""
    img = as_image(img)
    lo, hi = img.min(), img.max()
    if lo == hi:
        raise ConstantImage("image is constant; no threshold separates it")
    return float((lo + hi) / 2)


class IsodataRule:
    """Class-means midpoint update, evaluated in O(log n) per call.

    Pixels are sorted once; each update locates the split with a binary
    search and reads both class sums off a prefix-sum table.
    """

    def __init__(self, img):
        values = np.sort(as_image(img), axis=None)
        self._values = values
        self._prefix = np.concatenate(([0.0], np.cumsum(values)))
        self._n = values.size

    def __call__(self, t: float) -> float:
        n_low = int(np.searchsorted(self._values, t, side="right"))
        if n_low == 0 or n_low == self._n:
            raise EmptyClass(f"threshold {t:.6g} leaves one class empty")
        low = self._prefix[n_low] / n_low
        high = (self._prefix[-1] - self._prefix[n_low]) / (self._n - n_low)
        return float((low + high) / 2)


def isodata_update(img, t: float) -> float:
    """One isodata step from threshold ``t``."""
    return IsodataRule(img)(t)


def iterate_threshold(
    img,
    t0: float | None = None,
    epsilon: float = DEFAULT_EPSILON,
    max_iter: int = DEFAULT_MAX_ITER,
    rule: Callable[[np.ndarray], Callable[[float], float]] = IsodataRule,
) -> ThresholdTrace:
    """Refine a global threshold until successive values differ by < epsilon.

    Parameters
    ----------
    img : array_like
        Normalized image.
    t0 : float, optional
        Starting threshold; defaults to the image midrange.
    epsilon : float
        Convergence tolerance on ``|T_k - T_{k-1}|``.
    max_iter : int
        Hard cap on the number of updates.
    rule : callable
        Factory ``rule(img) -> update(t)``; swap in another update scheme here.

    Returns
    -------
    ThresholdTrace
        ``converged`` is False when ``max_iter`` was hit or a class emptied.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    if t0 is None:
        t0 = initial_threshold(img)
    if not 0.0 < t0 < 1.0:
        raise ValueError(f"t0 must lie in (0, 1), got {t0}")

    update = rule(img)
    trace = ThresholdTrace(float(t0))
    prev = float(t0)
    for k in range(1, max_iter + 1):
        try:
            t = update(prev)
        except EmptyClass:
            trace.stop_reason = "empty_class"
            return trace
        err = abs(t - prev)
        trace.steps.append(TraceStep(k, t, err))
        prev = t
        if err < epsilon:
            trace.converged = True
            trace.stop_reason = "converged"
            return trace
    trace.stop_reason = "max_iter"
    return trace


def apply_global_threshold(img, t: float) -> np.ndarray:
    return as_image(img) > t


def local_adaptive_threshold(img, window: int = DEFAULT_WINDOW, bias: float = 0.0) -> np.ndarray:
    """Foreground where a pixel exceeds its neighbourhood midrange minus ``bias``."""
    if window < 3 or window % 2 == 0:
        raise ValueError(f"window must be an odd integer >= 3, got {window}")
    if not -1.0 <= bias <= 1.0:
        raise ValueError(f"bias must lie in [-1, 1], got {bias}")
    img = as_image(img)
    lo = window_reduce(img, window, window, np.minimum)
    hi = window_reduce(img, window, window, np.maximum)
    return img > (lo + hi) / 2 - bias


@dataclass
class Region:
    """One 8-connected foreground component."""

    label: int
    pixel_count: int
    bbox: tuple[int, int, int, int]  # x_min, y_min, x_max, y_max (inclusive)
    centroid: tuple[float, float]  # x, y
    coords: np.ndarray = field(repr=False)  # (n, 2) array of (row, col)
    features: np.ndarray | None = None

    @property
    def bbox_width(self) -> int:
        return self.bbox[2] - self.bbox[0] + 1

    @property
    def bbox_height(self) -> int:
        return self.bbox[3] - self.bbox[1] + 1


_EIGHT = np.ones((3, 3), dtype=bool)


def label_mask(mask) -> tuple[np.ndarray, int]:
    """Raster-order 8-connectivity labeling (0 = background)."""
    labels, n = ndimage.label(as_mask(mask), structure=_EIGHT)
    return labels, int(n)


def connected_components(mask) -> list[Region]:
    """Extract regions sorted by descending size, relabeled densely from 1.

    Ties keep raster order of each region's first pixel.
    """
    labels, n = label_mask(mask)
    if n == 0:
        return []
    flat = labels.ravel()
    order = np.argsort(flat, kind="stable")
    counts = np.bincount(flat, minlength=n + 1)
    starts = np.concatenate(([0], np.cumsum(counts)))
    width = labels.shape[1]

    groups = []
    for lab in range(1, n + 1):
        idx = order[starts[lab]:starts[lab + 1]]
        groups.append(idx)
    # stable sort on count keeps raster order for equal sizes
    ranking = sorted(range(n), key=lambda i: -len(groups[i]))

    regions = []
    for new_label, i in enumerate(ranking, start=1):
        idx = groups[i]
        rows = idx // width
        cols = idx % width
        regions.append(
            Region(
                label=new_label,
                pixel_count=int(idx.size),
                bbox=(int(cols.min()), int(rows.min()), int(cols.max()), int(rows.max())),
                centroid=(float(cols.mean()), float(rows.mean())),
                coords=np.column_stack((rows, cols)),
            )
        )
    return regions


def regions_to_mask(regions: Sequence[Region], shape) -> np.ndarray:
    out = np.zeros(shape, dtype=bool)
    for r in regions:
        out[r.coords[:, 0], r.coords[:, 1]] = True
    return out
