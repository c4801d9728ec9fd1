"""End-to-end orchestration: ingest, enhance, segment, extract, classify.

Every stage can write its intermediate image, so a run leaves behind the
same step-by-step sequence a reader would inspect by eye: input, log
stretch, erosion, smoothing, mask. Intermediates are saved twice, as an
8-bit PGM for viewing and as a lossless 64-bit float FITS that can be fed
back into the next stage.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import bpnn, fits_io, imgcore, preprocess, segmentation
from .errors import (
    ConfigError,
    CosmicSegError,
    DimensionMismatch,
    EmptyDataset,
    ModelShapeMismatch,
    OutOfBounds,
    StageError,
)
from .segmentation import Region, ThresholdTrace

N_FEATURES = 7
FEATURE_NAMES = (
    "area_fraction",
    "mean_intensity",
    "max_intensity",
    "intensity_std",
    "fill_ratio",
    "elongation",
    "compactness",
)
MIN_TRAIN_SAMPLES = 10

STAGES = ("input", "log", "erode", "smooth")


@dataclass
class PipelineConfig:
    log_c: float = preprocess.DEFAULT_LOG_C
    se_shape: str = "square"
    se_size: int = 3
    erode_iters: int = 1
    sigma: float = 1.0
    mode: str = "global"
    epsilon: float = segmentation.DEFAULT_EPSILON
    max_iter: int = segmentation.DEFAULT_MAX_ITER
    window: int = segmentation.DEFAULT_WINDOW
    bias: float = 0.0
    threshold: float | None = None  # forces the global cut, skipping iteration
    min_pixels: int = 5
    layers: tuple[int, ...] = (7, 10, 1)
    lr: float = 0.1
    epochs: int = 1000
    patience: int = 6
    seed: int = 0
    split: tuple[float, float, float] = (0.70, 0.15, 0.15)
    cutoff: float = 0.5

    def validate(self) -> "PipelineConfig":
        if not self.log_c > 0:
            raise ConfigError("log_c must be positive")
        if self.se_shape not in ("square", "cross"):
            raise ConfigError(f"se_shape must be square or cross, got {self.se_shape!r}")
        if self.se_size < 1 or self.se_size % 2 == 0:
            raise ConfigError("se_size must be a positive odd integer")
        if self.erode_iters < 0:
            raise ConfigError("erode_iters must be >= 0")
        if not self.sigma > 0:
            raise ConfigError("sigma must be positive")
        if self.mode not in ("global", "local"):
            raise ConfigError(f"mode must be global or local, got {self.mode!r}")
        if not self.epsilon > 0 or self.max_iter < 1:
            raise ConfigError("epsilon must be positive and max_iter >= 1")
        if self.window < 3 or self.window % 2 == 0:
            raise ConfigError("window must be an odd integer >= 3")
        if not -1.0 <= self.bias <= 1.0:
            raise ConfigError("bias must lie in [-1, 1]")
        if self.threshold is not None and not 0.0 <= self.threshold <= 1.0:
            raise ConfigError("threshold must lie in [0, 1]")
        if self.min_pixels < 1:
            raise ConfigError("min_pixels must be >= 1")
        if not 0.0 < self.cutoff < 1.0:
            raise ConfigError("cutoff must lie in (0, 1)")
        if len(self.layers) < 2 or any(n < 1 for n in self.layers):
            raise ConfigError(f"bad layer sizes {self.layers}")
        self.train_config()  # validates lr / epochs / patience / split
        return self

    def train_config(self) -> bpnn.TrainConfig:
        return bpnn.TrainConfig(
            learning_rate=self.lr,
            max_epochs=self.epochs,
            patience=self.patience,
            seed=self.seed,
            split=tuple(self.split),
        )

    def structuring_element(self) -> preprocess.StructuringElement:
        return preprocess.StructuringElement.named(self.se_shape, self.se_size)

    # -- key=value files ---------------------------------------------------

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in dataclasses.fields(cls)]

    def updated(self, **values) -> "PipelineConfig":
        """Copy with ``values`` (strings or typed) applied; ``None`` means unchanged."""
        changes = {}
        for key, raw in values.items():
            name = key.replace("-", "_")
            if name not in self.keys():
                raise ConfigError(f"unknown config key {key!r}")
            if raw is None:
                continue
            changes[name] = _coerce(name, raw)
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_text(cls, text: str) -> "PipelineConfig":
        values = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
        return cls().updated(**values).validate()

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        return cls.from_text(Path(path).read_text())

    def to_text(self) -> str:
        lines = []
        for name in self.keys():
            v = getattr(self, name)
            if v is None:
                continue
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            lines.append(f"{name.replace('_', '-')}={v}")
        return "\n".join(lines) + "\n"


_TUPLE_INT = {"layers"}
_TUPLE_FLOAT = {"split"}


def _coerce(name: str, raw):
    default = getattr(PipelineConfig, name, None)
    try:
        if name in _TUPLE_INT:
            items = raw.split(",") if isinstance(raw, str) else raw
            return tuple(int(x) for x in items)
        if name in _TUPLE_FLOAT:
            items = raw.split(",") if isinstance(raw, str) else raw
            return tuple(float(x) for x in items)
        if name == "threshold":
            if isinstance(raw, str) and raw.lower() in ("", "none"):
                return None
            return float(raw)
        if isinstance(default, bool):
            return raw if isinstance(raw, bool) else str(raw).lower() in ("1", "true", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return str(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value {raw!r} for {name}") from exc


# -- features -------------------------------------------------------------

def _perimeter(region: Region) -> int:
    """Region pixels with at least one 4-neighbour outside the region."""
    x0, y0, x1, y1 = region.bbox
    box = np.zeros((y1 - y0 + 3, x1 - x0 + 3), dtype=bool)
    box[region.coords[:, 0] - y0 + 1, region.coords[:, 1] - x0 + 1] = True
    inner = box[1:-1, 1:-1]
    interior = inner & box[:-2, 1:-1] & box[2:, 1:-1] & box[1:-1, :-2] & box[1:-1, 2:]
    return int(np.count_nonzero(inner & ~interior))


def featurize(region: Region, img) -> np.ndarray:
    """Seven scale-free descriptors, each in [0, 1], in a fixed order.

    ``area_fraction, mean_intensity, max_intensity, intensity_std,
    fill_ratio, elongation, compactness``. Pixels outside the image count as
    background when measuring the perimeter.
    """
    img = np.asarray(img, dtype=np.float64)
    rows, cols = region.coords[:, 0], region.coords[:, 1]
    if (rows.min() < 0 or cols.min() < 0
            or rows.max() >= img.shape[0] or cols.max() >= img.shape[1]):
        raise OutOfBounds(f"region {region.label} extends beyond a {img.shape} image")
    values = img[rows, cols]
    bw, bh = region.bbox_width, region.bbox_height
    perimeter = _perimeter(region)
    feats = np.array([
        region.pixel_count / img.size,
        values.mean(),
        values.max(),
        min(values.std(), 1.0),
        region.pixel_count / (bw * bh),
        1.0 - min(bw, bh) / max(bw, bh),
        min(4.0 * math.pi * region.pixel_count / perimeter ** 2, 1.0),
    ])
    return np.clip(feats, 0.0, 1.0)


# -- in-memory stages -----------------------------------------------------

def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except CosmicSegError as exc:
        raise StageError(name, exc) from exc
    except ValueError as exc:
        raise StageError(name, exc) from exc


def enhance(img, cfg: PipelineConfig) -> dict[str, np.ndarray]:
    """Run the enhancement chain, returning every stage keyed by name."""
    stages = {"input": _stage("input", imgcore.as_image, img)}
    stages["log"] = _stage("log", preprocess.log_transform, stages["input"], cfg.log_c)
    stages["erode"] = _stage("erode", preprocess.erode, stages["log"],
                             cfg.structuring_element(), cfg.erode_iters)
    stages["smooth"] = _stage("smooth", preprocess.gaussian_smooth, stages["erode"], cfg.sigma)
    return stages


def threshold_stage(img, cfg: PipelineConfig) -> tuple[np.ndarray, ThresholdTrace | None]:
    """Binarize an enhanced image with the configured mode."""
    if cfg.mode == "local":
        return _stage("segment", segmentation.local_adaptive_threshold, img,
                      cfg.window, cfg.bias), None
    if cfg.threshold is not None:
        return _stage("segment", segmentation.apply_global_threshold, img, cfg.threshold), None
    trace = _stage("segment", segmentation.iterate_threshold, img, None,
                   cfg.epsilon, cfg.max_iter)
    return segmentation.apply_global_threshold(img, trace.final_threshold), trace


@dataclass
class SegmentResult:
    mask: np.ndarray
    trace: ThresholdTrace | None
    stages: dict[str, np.ndarray]
    metrics: imgcore.MetricsReport | None = None
    header: fits_io.FitsHeader | None = None

    @property
    def enhanced(self) -> np.ndarray:
        return self.stages["smooth"]


def segment_image(img, cfg: PipelineConfig, truth=None) -> SegmentResult:
    stages = enhance(img, cfg)
    mask, trace = threshold_stage(stages["smooth"], cfg)
    metrics = None
    if truth is not None:
        metrics = _stage("metrics", imgcore.compare_masks, mask, truth)
    return SegmentResult(mask, trace, stages, metrics)


def extract_regions(mask, img, min_pixels: int) -> list[Region]:
    regions = [r for r in segmentation.connected_components(mask) if r.pixel_count >= min_pixels]
    for r in regions:
        r.features = featurize(r, img)
    return regions


# -- artifact I/O -----------------------------------------------------------

def stage_filename(index: int, name: str, ext: str) -> str:
    return f"{index:02d}_{name}.{ext}"


def write_stage_images(stages: dict[str, np.ndarray], out_dir: Path) -> None:
    for i, name in enumerate(STAGES):
        img = stages[name]
        (out_dir / stage_filename(i, name, "pgm")).write_bytes(fits_io.write_pgm(img))
        header = fits_io.FitsHeader.for_image(img.shape[1], img.shape[0], bitpix=-64)
        (out_dir / stage_filename(i, name, "fits")).write_bytes(fits_io.write_fits(header, img))


def read_stage_image(path) -> np.ndarray:
    """Load an intermediate written by the pipeline, without renormalizing."""
    _, img = fits_io.read_fits(path, normalize_output=False)
    return img


def _dump_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def load_fits_input(path) -> tuple[fits_io.FitsHeader, np.ndarray]:
    with open(path, "rb") as fh:
        data = fh.read()
    return _stage("ingest", fits_io.parse_fits, data)


def load_truth(path) -> np.ndarray:
    img, _ = fits_io.read_pgm(path)
    return img > 0


def run_segment(cfg: PipelineConfig, input_path, out_dir=None, truth_path=None) -> SegmentResult:
    """Segment a FITS file; with ``out_dir`` every stage and the mask are written."""
    cfg.validate()
    header, img = load_fits_input(input_path)
    truth = load_truth(truth_path) if truth_path is not None else None
    if truth is not None and truth.shape != img.shape:
        raise StageError("metrics", DimensionMismatch(
            f"truth mask {truth.shape} does not match image {img.shape}"))
    result = segment_image(img, cfg, truth)
    result.header = header
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_stage_images(result.stages, out)
        (out / stage_filename(len(STAGES), "mask", "pgm")).write_bytes(
            fits_io.write_mask_pgm(result.mask))
        if result.trace is not None:
            (out / "trace.csv").write_text(result.trace.to_csv())
        if result.metrics is not None:
            (out / "metrics.json").write_text(_dump_json(result.metrics.to_dict()))
    return result


# -- labeled data ------------------------------------------------------------

def label_regions(regions: Sequence[Region], truth, min_overlap: float = 0.5) -> np.ndarray:
    """1.0 for regions with at least ``min_overlap`` of their pixels inside ``truth``."""
    truth = np.asarray(truth, dtype=bool)
    labels = []
    for r in regions:
        inside = truth[r.coords[:, 0], r.coords[:, 1]].mean()
        labels.append(1.0 if inside >= min_overlap else 0.0)
    return np.array(labels)


def regions_dataset(img, truth, cfg: PipelineConfig) -> bpnn.Dataset:
    """Featurized, truth-labeled regions of one image."""
    seg = segment_image(img, cfg)
    regions = extract_regions(seg.mask, seg.enhanced, cfg.min_pixels)
    X = np.array([r.features for r in regions]).reshape(-1, N_FEATURES)
    return bpnn.Dataset(X, label_regions(regions, truth))


def synthetic_region_dataset(n_regions: int, cfg: PipelineConfig, seed: int = 0,
                             shape=(128, 128), n_blobs: int = 6, n_streaks: int = 6,
                             n_points: int = 10) -> bpnn.Dataset:
    """Collect ``n_regions`` labeled regions (blob = 1, artifact = 0) from synthetic fields."""
    from .synth import star_field

    Xs, ys = [], []
    total = 0
    k = 0
    while total < n_regions:
        f = star_field(shape, n_blobs=n_blobs, seed=seed * 100003 + k, n_streaks=n_streaks,
                       n_points=n_points)
        k += 1
        part = regions_dataset(f.image, f.truth, cfg)
        Xs.append(part.X)
        ys.append(part.y)
        total += len(part)
        if k > 100 * n_regions:
            raise EmptyDataset("synthetic fields are not producing regions")
    return bpnn.Dataset(np.vstack(Xs)[:n_regions], np.vstack(ys)[:n_regions])


def write_feature_csv(data: bpnn.Dataset) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([*FEATURE_NAMES, "label"])
    for x, y in zip(data.X, data.y):
        w.writerow([*(repr(float(v)) for v in x), repr(float(y[0]))])
    return buf.getvalue()


def read_feature_csv(text: str) -> bpnn.Dataset:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise EmptyDataset("feature CSV is empty")
    body = rows[1:] if not _is_number(rows[0][0]) else rows
    body = [r for r in body if r]
    if not body:
        raise EmptyDataset("feature CSV has no samples")
    arr = np.array([[float(v) for v in r] for r in body])
    if arr.shape[1] != N_FEATURES + 1:
        raise DimensionMismatch(
            f"feature CSV has {arr.shape[1]} columns, expected {N_FEATURES} features + label")
    return bpnn.Dataset(arr[:, :-1], arr[:, -1])


def _is_number(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


def truth_path_for(fits_path) -> Path:
    p = Path(fits_path)
    return p.with_name(p.stem + ".truth.pgm")


def load_training_data(source, cfg: PipelineConfig) -> bpnn.Dataset:
    """Feature CSV, a FITS file with a sibling ``.truth.pgm``, or a directory of such pairs."""
    if isinstance(source, bpnn.Dataset):
        return source
    p = Path(source)
    if p.is_dir():
        files = sorted(p.glob("*.fits"))
    elif p.suffix.lower() == ".csv":
        return read_feature_csv(p.read_text())
    else:
        files = [p]
    parts = []
    for f in files:
        truth_file = truth_path_for(f)
        if not truth_file.exists():
            continue
        _, img = load_fits_input(f)
        truth = load_truth(truth_file)
        if truth.shape != img.shape:
            raise DimensionMismatch(f"{truth_file} does not match {f}")
        parts.append(regions_dataset(img, truth, cfg))
    if not parts:
        raise EmptyDataset(f"no image + truth pairs found at {source}")
    return bpnn.Dataset(np.vstack([d.X for d in parts]), np.vstack([d.y for d in parts]))


@dataclass
class TrainOutcome:
    result: bpnn.TrainResult
    reports: list[bpnn.EvalReport]
    model_path: Path | None = None

    @property
    def net(self) -> bpnn.MlpNetwork:
        return self.result.net

    def evaluation_doc(self) -> dict:
        return {
            "best_epoch": self.result.best_epoch,
            "stopped_epoch": self.result.stopped_epoch,
            "reports": [r.to_dict() for r in self.reports],
            "grid": bpnn.report_grid(self.reports),
        }


def run_train(cfg: PipelineConfig, data, model_path=None, out_dir=None) -> TrainOutcome:
    """Train the region classifier and write model, history and evaluation files."""
    cfg.validate()
    dataset = load_training_data(data, cfg)
    if len(dataset) < MIN_TRAIN_SAMPLES:
        raise EmptyDataset(
            f"need at least {MIN_TRAIN_SAMPLES} labeled samples, got {len(dataset)}")
    if dataset.X.shape[1] != cfg.layers[0]:
        raise DimensionMismatch(
            f"samples have {dataset.X.shape[1]} features, input layer has {cfg.layers[0]}")
    net = bpnn.init_network(cfg.layers, cfg.seed)
    result = bpnn.train(net, dataset, cfg.train_config())
    reports = [bpnn.evaluate(result.net, result.splits[name], cfg.cutoff, name)
               for name in bpnn.SET_NAMES]
    outcome = TrainOutcome(result, reports)

    out = Path(out_dir) if out_dir is not None else None
    if model_path is None and out is not None:
        model_path = out / "model.json"
    if model_path is not None:
        model_path = Path(model_path)
        model_path.parent.mkdir(parents=True, exist_ok=True)
        model_path.write_text(result.net.to_json())
        outcome.model_path = model_path
        base = out if out is not None else model_path.parent
        base.mkdir(parents=True, exist_ok=True)
        stem = model_path.stem
        (base / f"{stem}.history.csv").write_text(result.history_csv())
        (base / f"{stem}.eval.json").write_text(_dump_json(outcome.evaluation_doc()))
    return outcome


# -- detection -------------------------------------------------------------------

@dataclass
class ScoredRegion:
    region: Region
    score: float
    predicted: bool

    def to_dict(self) -> dict:
        r = self.region
        return {
            "label": r.label,
            "pixel_count": r.pixel_count,
            "bbox": list(r.bbox),
            "centroid": list(r.centroid),
            "features": dict(zip(FEATURE_NAMES, (float(v) for v in r.features))),
            "score": self.score,
            "predicted": self.predicted,
        }


@dataclass
class DetectionReport:
    source_file: str
    image_dims: tuple[int, int]  # width, height
    trace: ThresholdTrace | None
    regions: list[ScoredRegion] = field(default_factory=list)
    metrics: imgcore.MetricsReport | None = None
    mask: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "source_file": self.source_file,
            "image_dims": list(self.image_dims),
            "trace": self.trace.to_dict() if self.trace is not None else None,
            "regions": [r.to_dict() for r in self.regions],
            "metrics": self.metrics.to_dict() if self.metrics is not None else None,
        }

    def to_json(self) -> str:
        return _dump_json(self.to_dict())


def load_model(path) -> bpnn.MlpNetwork:
    net = bpnn.MlpNetwork.from_json(Path(path).read_text())
    if net.n_inputs != N_FEATURES:
        raise ModelShapeMismatch(
            f"model expects {net.n_inputs} inputs; regions carry {N_FEATURES} features")
    if net.n_outputs != 1:
        raise ModelShapeMismatch(f"model has {net.n_outputs} outputs; a single score is required")
    return net


def detect_image(img, net: bpnn.MlpNetwork, cfg: PipelineConfig, source_file: str = "",
                 truth=None, seg: SegmentResult | None = None) -> DetectionReport:
    if seg is None:
        seg = segment_image(img, cfg, truth)
    regions = extract_regions(seg.mask, seg.enhanced, cfg.min_pixels)
    scored = []
    if regions:
        scores = bpnn.predict(net, np.array([r.features for r in regions]))[:, 0]
        scored = [ScoredRegion(r, float(s), bool(s > cfg.cutoff)) for r, s in zip(regions, scores)]
        scored.sort(key=lambda sr: (-sr.score, sr.region.label))
    h, w = seg.mask.shape
    return DetectionReport(source_file, (w, h), seg.trace, scored, seg.metrics, seg.mask)


def run_detect(cfg: PipelineConfig, model_path, input_path, out_dir=None,
               truth_path=None) -> DetectionReport:
    """Segment, extract, featurize and score every region of a FITS image."""
    cfg.validate()
    net = load_model(model_path)
    seg = run_segment(cfg, input_path, out_dir, truth_path)
    report = detect_image(seg.stages["input"], net, cfg, str(input_path), seg=seg)
    if out_dir is not None:
        Path(out_dir, "detection.json").write_text(report.to_json())
    return report
