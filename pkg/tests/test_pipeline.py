import json
import math

import numpy as np
import pytest

from cosmicseg import bpnn, fits_io, pipeline, preprocess, segmentation, synth
from cosmicseg.errors import (
    ConfigError,
    EmptyDataset,
    ModelShapeMismatch,
    OutOfBounds,
    StageError,
)
from cosmicseg.pipeline import PipelineConfig


def _save_field(path, image, truth=None, bitpix=-64):
    h, w = image.shape
    header = fits_io.FitsHeader.for_image(w, h, bitpix=bitpix)
    path.write_bytes(fits_io.write_fits(header, image))
    if truth is not None:
        truth_file = pipeline.truth_path_for(path)
        truth_file.write_bytes(fits_io.write_mask_pgm(truth))
        return truth_file
    return None


def _region(mask):
    regions = segmentation.connected_components(mask)
    assert len(regions) == 1
    return regions[0]


# -- configuration ----------------------------------------------------------

def test_config_defaults_validate():
    cfg = PipelineConfig().validate()
    assert cfg.layers == (7, 10, 1)
    assert cfg.log_c == pytest.approx(1 / math.log(2))


def test_config_text_roundtrip():
    cfg = PipelineConfig(sigma=2.5, mode="local", window=9, layers=(7, 5, 1), threshold=0.3)
    again = PipelineConfig.from_text(cfg.to_text())
    assert again == cfg


def test_config_text_ignores_comments_and_hyphens():
    cfg = PipelineConfig.from_text("# comment\nerode-iters = 2\n\nse_shape=cross  # inline\n")
    assert cfg.erode_iters == 2
    assert cfg.se_shape == "cross"


@pytest.mark.parametrize("text", ["nonsense=1", "sigma", "sigma=-1", "window=4",
                                  "split=0.5,0.5,0.5", "mode=fancy", "epochs=abc"])
def test_config_rejects_bad_text(text):
    with pytest.raises(ConfigError):
        PipelineConfig.from_text(text)


def test_config_updated_skips_none():
    cfg = PipelineConfig().updated(sigma=None, epochs="5")
    assert cfg.sigma == 1.0 and cfg.epochs == 5


# -- features ---------------------------------------------------------------

def test_featurize_single_pixel():
    img = np.zeros((10, 10))
    img[4, 6] = 0.7
    mask = img > 0
    f = pipeline.featurize(_region(mask), img)
    np.testing.assert_allclose(f, [1 / 100, 0.7, 0.7, 0.0, 1.0, 0.0, 1.0])


def test_featurize_square_block():
    img = np.zeros((20, 20))
    img[5:14, 5:14] = 0.5
    f = pipeline.featurize(_region(img > 0), img)
    assert f[0] == pytest.approx(81 / 400)
    assert f[1] == pytest.approx(0.5) and f[2] == pytest.approx(0.5)
    assert f[3] == pytest.approx(0.0)
    assert f[4] == pytest.approx(1.0)  # fill
    assert f[5] == pytest.approx(0.0)  # elongation
    # 32 boundary pixels on a 9x9 block
    assert f[6] == pytest.approx(4 * math.pi * 81 / 32 ** 2)


def test_featurize_full_image_rectangle():
    img = np.full((4, 10), 0.25)
    img[0, 0] = 1.0
    f = pipeline.featurize(_region(np.ones((4, 10), bool)), img)
    assert f[0] == pytest.approx(1.0)
    assert f[2] == pytest.approx(1.0)
    assert f[4] == pytest.approx(1.0)
    assert f[5] == pytest.approx(1 - 4 / 10)
    assert np.all((f >= 0) & (f <= 1))


def test_featurize_diagonal_line_is_sparse():
    img = np.eye(8)
    f = pipeline.featurize(_region(img > 0), img)
    assert f[4] == pytest.approx(8 / 64)
    assert f[5] == pytest.approx(0.0)


def test_featurize_out_of_bounds():
    r = _region(np.ones((3, 3), bool))
    with pytest.raises(OutOfBounds):
        pipeline.featurize(r, np.zeros((2, 2)))


def test_extract_regions_min_pixels_filters():
    mask = np.zeros((10, 10), bool)
    mask[1:3, 1:3] = True  # 4 px
    mask[6:9, 6:9] = True  # 9 px
    img = mask.astype(float)
    assert [r.pixel_count for r in pipeline.extract_regions(mask, img, 1)] == [9, 4]
    assert [r.pixel_count for r in pipeline.extract_regions(mask, img, 5)] == [9]
    assert pipeline.extract_regions(mask, img, 10) == []


# -- segmentation runs -------------------------------------------------------

@pytest.fixture(scope="module")
def field():
    return synth.star_field((96, 96), n_blobs=5, seed=4)


def test_run_segment_area_tracks_truth(tmp_path, field):
    path = tmp_path / "f.fits"
    _save_field(path, field.image)
    res = pipeline.run_segment(PipelineConfig(), path)
    ratio = res.mask.sum() / field.truth.sum()
    assert 0.5 <= ratio <= 2.0
    assert res.trace.converged


def test_run_segment_writes_artifacts(tmp_path, field):
    path = tmp_path / "f.fits"
    truth = _save_field(path, field.image, field.truth)
    out = tmp_path / "out"
    res = pipeline.run_segment(PipelineConfig(), path, out, truth)
    names = sorted(p.name for p in out.iterdir())
    assert names == ["00_input.fits", "00_input.pgm", "01_log.fits", "01_log.pgm",
                     "02_erode.fits", "02_erode.pgm", "03_smooth.fits", "03_smooth.pgm",
                     "04_mask.pgm", "metrics.json", "trace.csv"]
    metrics = json.loads((out / "metrics.json").read_text())
    assert metrics["mse"] == metrics["error_rate"]
    assert metrics["accuracy"] == pytest.approx(1 - metrics["error_rate"])
    assert res.metrics.error_rate < 0.05
    mask_back, _ = fits_io.read_pgm(out / "04_mask.pgm")
    np.testing.assert_array_equal(mask_back > 0, res.mask)
    assert (out / "trace.csv").read_text() == res.trace.to_csv()


def test_forced_threshold_one_gives_empty_mask(tmp_path, field):
    path = tmp_path / "f.fits"
    _save_field(path, field.image)
    cfg = PipelineConfig(threshold=1.0, erode_iters=0)
    res = pipeline.run_segment(cfg, path)
    assert not res.mask.any()
    assert res.trace is None


def test_local_mode_has_no_trace(tmp_path, field):
    path = tmp_path / "f.fits"
    _save_field(path, field.image)
    res = pipeline.run_segment(PipelineConfig(mode="local", window=15, bias=-0.05), path)
    assert res.trace is None
    assert res.mask.shape == field.image.shape


def test_stage_artifacts_compose_bit_exactly(tmp_path, field):
    path = tmp_path / "f.fits"
    _save_field(path, field.image)
    out = tmp_path / "out"
    cfg = PipelineConfig(erode_iters=2, sigma=1.5)
    pipeline.run_segment(cfg, path, out)

    steps = [
        lambda a: preprocess.log_transform(a, cfg.log_c),
        lambda a: preprocess.erode(a, cfg.structuring_element(), cfg.erode_iters),
        lambda a: preprocess.gaussian_smooth(a, cfg.sigma),
    ]
    for k, step in enumerate(steps):
        src = pipeline.read_stage_image(out / pipeline.stage_filename(k, pipeline.STAGES[k], "fits"))
        nxt = step(src)
        name = pipeline.stage_filename(k + 1, pipeline.STAGES[k + 1], "fits")
        header = fits_io.FitsHeader.for_image(nxt.shape[1], nxt.shape[0], bitpix=-64)
        assert fits_io.write_fits(header, nxt) == (out / name).read_bytes(), name

    smooth = pipeline.read_stage_image(out / "03_smooth.fits")
    mask, _ = pipeline.threshold_stage(smooth, cfg)
    assert fits_io.write_mask_pgm(mask) == (out / "04_mask.pgm").read_bytes()


def test_truth_shape_mismatch(tmp_path, field):
    path = tmp_path / "f.fits"
    _save_field(path, field.image)
    bad = tmp_path / "bad.pgm"
    bad.write_bytes(fits_io.write_mask_pgm(np.zeros((5, 5), bool)))
    with pytest.raises(StageError):
        pipeline.run_segment(PipelineConfig(), path, truth_path=bad)


def test_constant_image_reports_stage(tmp_path):
    path = tmp_path / "flat.fits"
    path.write_bytes(fits_io.write_fits(fits_io.FitsHeader.for_image(8, 8, bitpix=-64),
                                        np.full((8, 8), 0.5)))
    with pytest.raises(StageError) as info:
        pipeline.run_segment(PipelineConfig(), path)
    assert info.value.stage == "segment"


# -- training ----------------------------------------------------------------

def _threshold_csv(n, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.random((n, pipeline.N_FEATURES))
    y = (X[:, 0] > np.median(X[:, 0])).astype(float)
    return pipeline.write_feature_csv(bpnn.Dataset(X, y))


def test_feature_csv_roundtrip():
    text = _threshold_csv(20)
    data = pipeline.read_feature_csv(text)
    assert pipeline.write_feature_csv(data) == text


def test_run_train_learns_single_feature_rule(tmp_path):
    csv_path = tmp_path / "data.csv"
    csv_path.write_text(_threshold_csv(200))
    outcome = pipeline.run_train(PipelineConfig(), csv_path, tmp_path / "m" / "model.json")
    test = outcome.reports[2]
    assert test.set_name == "test"
    assert test.accuracy > 0.9
    assert (tmp_path / "m" / "model.history.csv").exists()
    doc = json.loads((tmp_path / "m" / "model.eval.json").read_text())
    assert doc["best_epoch"] == outcome.result.best_epoch


def test_run_train_is_reproducible(tmp_path):
    csv_path = tmp_path / "data.csv"
    csv_path.write_text(_threshold_csv(120, seed=3))
    pipeline.run_train(PipelineConfig(epochs=50), csv_path, tmp_path / "a.json")
    pipeline.run_train(PipelineConfig(epochs=50), csv_path, tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_run_train_refuses_tiny_dataset(tmp_path):
    csv_path = tmp_path / "data.csv"
    csv_path.write_text(_threshold_csv(9))
    with pytest.raises(EmptyDataset):
        pipeline.run_train(PipelineConfig(), csv_path)


def test_run_train_from_fits_directory(tmp_path):
    for seed in range(3):
        f = synth.star_field((96, 96), n_blobs=5, seed=seed, n_streaks=4, n_points=6)
        _save_field(tmp_path / f"f{seed}.fits", f.image, f.truth)
    data = pipeline.load_training_data(tmp_path, PipelineConfig())
    assert len(data) >= pipeline.MIN_TRAIN_SAMPLES
    assert set(np.unique(data.y)) == {0.0, 1.0}


def test_load_training_data_without_truth(tmp_path):
    _save_field(tmp_path / "f.fits", synth.star_field((32, 32), n_blobs=1).image)
    with pytest.raises(EmptyDataset):
        pipeline.load_training_data(tmp_path, PipelineConfig())


# -- detection ---------------------------------------------------------------

@pytest.fixture(scope="module")
def model_file(tmp_path_factory):
    cfg = PipelineConfig()
    data = pipeline.synthetic_region_dataset(300, cfg, seed=1)
    net = bpnn.train(bpnn.init_network(cfg.layers, 0), data, cfg.train_config()).net
    path = tmp_path_factory.mktemp("model") / "model.json"
    path.write_text(net.to_json())
    return path


def _blob_image(size=64, sigma=3.0, seed=0):
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size]
    img = 0.15 + 0.7 * np.exp(-((xx - 30) ** 2 + (yy - 34) ** 2) / (2 * sigma ** 2))
    return np.clip(img + rng.normal(0, 0.005, img.shape), 0, 1)


def test_detect_single_planted_blob(tmp_path, model_file):
    path = tmp_path / "blob.fits"
    _save_field(path, _blob_image())
    report = pipeline.run_detect(PipelineConfig(), model_file, path, tmp_path / "out")
    assert sum(r.predicted for r in report.regions) == 1
    best = report.regions[0]
    assert best.predicted
    cx, cy = best.region.centroid
    assert abs(cx - 30) < 1 and abs(cy - 34) < 1
    doc = json.loads((tmp_path / "out" / "detection.json").read_text())
    assert doc["image_dims"] == [64, 64]
    assert set(doc["regions"][0]["features"]) == set(pipeline.FEATURE_NAMES)


def test_detect_min_pixels_above_area_gives_nothing(tmp_path, model_file):
    path = tmp_path / "blob.fits"
    _save_field(path, _blob_image())
    seg = pipeline.run_segment(PipelineConfig(), path)
    area = int(seg.mask.sum())
    report = pipeline.run_detect(PipelineConfig(min_pixels=area + 1), model_file, path)
    assert report.regions == []
    report = pipeline.run_detect(PipelineConfig(min_pixels=area), model_file, path)
    assert len(report.regions) == 1
    report = pipeline.run_detect(PipelineConfig(min_pixels=64 * 64), model_file, path)
    assert report.regions == []


def test_detect_with_no_foreground(tmp_path, model_file):
    path = tmp_path / "blob.fits"
    _save_field(path, _blob_image())
    report = pipeline.run_detect(PipelineConfig(threshold=1.0), model_file, path)
    assert report.regions == []
    doc = json.loads(report.to_json())
    assert doc["regions"] == [] and doc["trace"] is None


def test_detect_rejects_wrong_model_shape(tmp_path):
    path = tmp_path / "blob.fits"
    _save_field(path, _blob_image())
    bad = tmp_path / "bad.json"
    bad.write_text(bpnn.init_network([5, 3, 1]).to_json())
    with pytest.raises(ModelShapeMismatch):
        pipeline.run_detect(PipelineConfig(), bad, path)
    bad.write_text(bpnn.init_network([7, 3, 2]).to_json())
    with pytest.raises(ModelShapeMismatch):
        pipeline.run_detect(PipelineConfig(), bad, path)


def test_detect_scores_sorted(tmp_path, model_file):
    f = synth.star_field((96, 96), n_blobs=5, seed=11, n_streaks=3, n_points=5)
    path = tmp_path / "f.fits"
    _save_field(path, f.image)
    report = pipeline.run_detect(PipelineConfig(), model_file, path)
    scores = [r.score for r in report.regions]
    assert scores == sorted(scores, reverse=True)
    assert all(r.predicted == (r.score > 0.5) for r in report.regions)
    for r in report.regions:
        assert 0.0 < r.score < 1.0
        assert np.all((r.region.features >= 0) & (r.region.features <= 1))
        assert r.region.pixel_count >= 5
