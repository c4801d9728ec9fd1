import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cosmicseg.errors import ConstantImage, EmptyClass
from cosmicseg.segmentation import (
    ThresholdTrace,
    apply_global_threshold,
    connected_components,
    initial_threshold,
    isodata_update,
    iterate_threshold,
    local_adaptive_threshold,
    regions_to_mask,
)

from oracles import exhaustive_isodata_mask, flood_fill_components, isodata_step, local_midrange_mask

PUBLISHED_T = [0.4843, 0.3782, 0.3156, 0.2711, 0.2430, 0.2240, 0.2145,
            0.2069, 0.2014, 0.1985, 0.1955, 0.1926, 0.1926]
PUBLISHED_ERR = [0.1061, 0.0626, 0.0446, 0.0281, 0.0190, 0.0095, 0.0076,
              0.0055, 0.0029, 0.0030, 0.0029, 0.0]


# -- initial threshold ----------------------------------------------------------

def test_midrange_full_range():
    assert initial_threshold(np.array([[0.0, 0.3, 1.0]])) == 0.5


def test_midrange_reference_value():
    img = np.array([[0.0312, 0.5, 0.9374, 0.2]])
    assert initial_threshold(img) == pytest.approx(0.4843, abs=1e-12)


def test_midrange_constant_image():
    with pytest.raises(ConstantImage):
        initial_threshold(np.full((1, 3), 0.2))


# -- isodata --------------------------------------------------------------------

def test_two_valued_balanced_is_fixed_point():
    img = np.array([[0.1] * 8 + [0.9] * 8])
    trace = iterate_threshold(img, 0.5, 1e-4, 50)
    assert len(trace.steps) == 1
    assert trace.steps[0].threshold == pytest.approx(0.5, abs=1e-15)
    assert trace.steps[0].error == pytest.approx(0.0, abs=1e-15)
    assert trace.converged


def test_two_valued_unbalanced_from_high_start():
    img = np.array([[0.1] * 24 + [0.9] * 8])
    trace = iterate_threshold(img, 0.8, 1e-4, 50)
    assert [s.iteration for s in trace.steps] == [1, 2]
    assert trace.steps[0].threshold == pytest.approx(0.5, abs=1e-15)
    assert trace.steps[0].error == pytest.approx(0.3, abs=1e-15)
    assert trace.steps[1].error == pytest.approx(0.0, abs=1e-15)
    assert trace.converged


def test_update_matches_direct_means(rng):
    img = rng.random((20, 30))
    for t in (0.1, 0.33, 0.5, 0.9):
        assert isodata_update(img, t) == pytest.approx(isodata_step(img.ravel(), t), abs=1e-14)


def test_empty_class_stops_trace():
    img = np.array([[0.2, 0.4]])
    with pytest.raises(EmptyClass):
        isodata_update(img, 0.9)
    trace = iterate_threshold(img, 0.9, 1e-4, 10)
    assert not trace.converged
    assert trace.stop_reason == "empty_class"
    assert trace.steps == []


def test_max_iter_reported(rng):
    img = rng.random((40, 40))
    trace = iterate_threshold(img, 0.95, 1e-300, 2)
    assert len(trace.steps) == 2
    assert not trace.converged and trace.stop_reason == "max_iter"


@pytest.mark.parametrize("bad", [dict(t0=0.0), dict(t0=1.0), dict(epsilon=0.0), dict(max_iter=0)])
def test_iterate_preconditions(bad):
    args = dict(t0=0.5, epsilon=1e-4, max_iter=10)
    args.update(bad)
    with pytest.raises(ValueError):
        iterate_threshold(np.array([[0.0, 1.0]]), **args)


def test_published_error_recurrence():
    trace = ThresholdTrace.from_thresholds(PUBLISHED_T)
    assert len(trace.steps) == 12
    for step, published in zip(trace.steps, PUBLISHED_ERR):
        assert abs(step.error - published) <= 1.5e-4
    assert trace.converged


def test_trace_recurrence_is_exact(rng):
    trace = iterate_threshold(rng.random((50, 50)) ** 3)
    assert all(r == 0.0 for r in trace.recurrence_residuals())
    assert trace.steps[0].error == abs(trace.steps[0].threshold - trace.t0)


def test_trace_csv_layout():
    csv = ThresholdTrace.from_thresholds(PUBLISHED_T).to_csv().splitlines()
    assert csv[0] == "iteration,threshold,error"
    assert csv[1] == "1,0.3782,0.1061"
    assert csv[-1] == "12,0.1926,0.0000"


def _bimodal(rng, shape=(64, 64)):
    img = rng.normal(0.25, 0.05, shape)
    yy, xx = np.mgrid[:shape[0], :shape[1]]
    for _ in range(rng.integers(1, 5)):
        cy, cx, r = rng.integers(0, shape[0]), rng.integers(0, shape[1]), rng.integers(4, 14)
        blob = (yy - cy) ** 2 + (xx - cx) ** 2 < r * r
        img[blob] = rng.normal(0.7, 0.08, blob.sum())
    return np.round(np.clip(img, 0, 1) * 255) / 255


def test_trace_monotone_after_first_step(rng):
    # bright sources on a dominant dark sky: the sequence falls steadily like the published trace
    for _ in range(10):
        img = _bimodal(rng)
        trace = iterate_threshold(img)
        th = trace.thresholds
        diffs = np.diff(th)
        assert np.all(diffs <= 0) or np.all(diffs >= 0)


def test_fixed_point_property(rng):
    for _ in range(10):
        img = _bimodal(rng)
        trace = iterate_threshold(img)
        assert trace.converged
        t = trace.final_threshold
        assert abs(isodata_update(img, t) - t) < 1e-4


def test_matches_exhaustive_scan_small(rng):
    for _ in range(10):
        img = rng.integers(0, 8, size=(16, 16)) / 7
        trace = iterate_threshold(img)
        np.testing.assert_array_equal(apply_global_threshold(img, trace.final_threshold),
                                      exhaustive_isodata_mask(img, trace.t0))


# -- global and local cut ------------------------------------------------------

def test_global_threshold_examples():
    img = np.array([[0.1, 0.5, 0.9]])
    assert not apply_global_threshold(img, 1.0).any()
    assert apply_global_threshold(img, 0.0).all()
    assert apply_global_threshold(img, 0.1926).tolist() == [[False, True, True]]


def test_local_constant_is_background():
    assert not local_adaptive_threshold(np.full((6, 6), 0.4), 3, 0.0).any()


def test_local_point_source():
    img = np.full((5, 5), 0.2)
    img[2, 2] = 1.0
    mask = local_adaptive_threshold(img, 3, 0.0)
    assert mask[2, 2]
    assert mask.sum() == 1


def test_local_huge_window_is_global_midrange(rng):
    img = rng.random((7, 9))
    for bias in (0.0, 0.05, -0.1):
        mask = local_adaptive_threshold(img, 2 * 9 + 1, bias)
        np.testing.assert_array_equal(mask, apply_global_threshold(img, initial_threshold(img) - bias))


@pytest.mark.parametrize("window,bias", [(3, 0.0), (5, 0.1), (7, -0.05)])
def test_local_matches_brute_force(window, bias, rng):
    img = rng.random((12, 10))
    np.testing.assert_array_equal(local_adaptive_threshold(img, window, bias),
                                  local_midrange_mask(img, window, bias))


def test_local_offset_invariance(rng):
    img = rng.random((12, 12)) * 0.5
    a = local_adaptive_threshold(img, 5, 0.0)
    b = local_adaptive_threshold(img + 0.25, 5, 0.0)
    # midrange shifts with the image; ties may only flip on float rounding
    assert (a != b).sum() <= 1


@pytest.mark.parametrize("window,bias", [(4, 0.0), (1, 0.0), (3, 1.5)])
def test_local_preconditions(window, bias):
    with pytest.raises(ValueError):
        local_adaptive_threshold(np.zeros((3, 3)), window, bias)


# -- components -------------------------------------------------------------------

def test_components_empty():
    assert connected_components(np.zeros((4, 4), bool)) == []


def test_diagonal_pixels_join():
    mask = np.zeros((3, 3), bool)
    mask[0, 0] = mask[1, 1] = True
    regions = connected_components(mask)
    assert len(regions) == 1 and regions[0].pixel_count == 2


def test_components_sorted_and_dense():
    mask = np.zeros((6, 8), bool)
    mask[0, 0] = True
    mask[2:5, 2:5] = True
    mask[0, 6:8] = True
    regions = connected_components(mask)
    assert [r.pixel_count for r in regions] == [9, 2, 1]
    assert [r.label for r in regions] == [1, 2, 3]
    big = regions[0]
    assert big.bbox == (2, 2, 4, 4)
    assert big.centroid == (3.0, 3.0)


def test_components_match_flood_fill(rng):
    for _ in range(20):
        mask = rng.random((12, 12)) < rng.uniform(0.2, 0.6)
        regions = connected_components(mask)
        oracle = flood_fill_components(mask)
        assert len(regions) == len(oracle)
        ours = sorted(sorted(map(tuple, r.coords.tolist())) for r in regions)
        theirs = sorted(sorted(c) for c in oracle)
        assert ours == theirs


@settings(max_examples=50)
@given(arrays(bool, st.tuples(st.integers(1, 10), st.integers(1, 10))))
def test_components_partition_foreground(mask):
    regions = connected_components(mask)
    np.testing.assert_array_equal(regions_to_mask(regions, mask.shape), mask)
    assert sum(r.pixel_count for r in regions) == mask.sum()
    for r in regions:
        x0, y0, x1, y1 = r.bbox
        assert r.pixel_count <= (x1 - x0 + 1) * (y1 - y0 + 1)
        assert x0 <= r.centroid[0] <= x1 and y0 <= r.centroid[1] <= y1
