import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from podfusion.errors import InvalidBox
from podfusion.geometry import BoundingBox, Point2, boxes_to_array, centroid, euclidean, iou, iou_matrix, iou_pairs

coord = st.floats(-1e4, 1e4, allow_nan=False)
extent = st.floats(0.01, 1e3, allow_nan=False)
boxes = st.builds(BoundingBox, coord, coord, extent, extent)
points = st.builds(Point2, coord, coord)


def test_iou_examples():
    a = BoundingBox(0, 0, 10, 10)
    assert iou(a, BoundingBox(0, 0, 10, 10)) == 1.0
    assert iou(a, BoundingBox(20, 20, 5, 5)) == 0.0
    # intersection 50, union 150
    assert iou(a, BoundingBox(5, 0, 10, 10)) == pytest.approx(50 / 150, abs=1e-12)


def test_touching_edges_do_not_overlap():
    assert iou(BoundingBox(0, 0, 10, 10), BoundingBox(10, 0, 10, 10)) == 0.0


@pytest.mark.parametrize("args", [(0, 0, 0, 1), (0, 0, 1, -1), (math.nan, 0, 1, 1), (0, math.inf, 1, 1)])
def test_invalid_boxes_rejected(args):
    with pytest.raises(InvalidBox):
        BoundingBox(*args)


def test_centroid_examples():
    assert centroid(BoundingBox(0, 0, 10, 10)) == Point2(5, 5)
    assert centroid(BoundingBox(2, 4, 6, 8)) == Point2(5, 8)
    assert centroid(BoundingBox(0, 0, 1, 1)) == Point2(0.5, 0.5)


def test_euclidean_examples():
    assert euclidean(Point2(0, 0), Point2(3, 4)) == 5.0
    assert euclidean(Point2(1, 1), Point2(1, 1)) == 0.0
    assert euclidean(Point2(0, 0), Point2(1, 1)) == pytest.approx(1.41421, abs=1e-5)


def test_corners_round_trip():
    b = BoundingBox.from_corners(1, 2, 4, 8)
    assert b == BoundingBox(1, 2, 3, 6)
    assert b.corners() == (1, 2, 4, 8)


@given(boxes, boxes)
def test_iou_symmetric_and_bounded(a, b):
    v = iou(a, b)
    assert 0.0 <= v <= 1.0
    assert v == iou(b, a)


@given(boxes)
def test_iou_self_is_one(a):
    assert iou(a, a) == 1.0


@given(st.builds(BoundingBox, st.floats(-100, 100), st.floats(-100, 100), st.floats(1, 50), st.floats(1, 50)),
       st.builds(BoundingBox, st.floats(-100, 100), st.floats(-100, 100), st.floats(1, 50), st.floats(1, 50)),
       st.floats(-1e3, 1e3), st.floats(-1e3, 1e3))
def test_iou_translation_invariant(a, b, dx, dy):
    assert iou(a.translate(dx, dy), b.translate(dx, dy)) == pytest.approx(iou(a, b), abs=1e-9)


@given(points, points, points)
def test_triangle_inequality(p, q, r):
    assert euclidean(p, r) <= euclidean(p, q) + euclidean(q, r) + 1e-9


@given(st.lists(boxes, min_size=1, max_size=6), st.lists(boxes, min_size=1, max_size=6))
def test_iou_matrix_matches_scalar(a, b):
    m = iou_matrix(boxes_to_array(a), boxes_to_array(b))
    for i, x in enumerate(a):
        for j, y in enumerate(b):
            assert m[i, j] == pytest.approx(iou(x, y), abs=1e-12)


@given(st.lists(st.tuples(st.integers(0, 60), st.integers(0, 60), st.integers(1, 20), st.integers(1, 20)),
                min_size=0, max_size=25),
       st.lists(st.tuples(st.integers(0, 60), st.integers(0, 60), st.integers(1, 20), st.integers(1, 20)),
                min_size=0, max_size=25),
       st.sampled_from([0.05, 0.3, 0.55, 1.0]))
def test_iou_pairs_matches_dense(a, b, thr):
    a = np.array(a, dtype=float).reshape(-1, 4) / 3
    b = np.array(b, dtype=float).reshape(-1, 4) / 3
    i, j, v = iou_pairs(a, b, thr)
    dense = iou_matrix(a, b)
    want = set(zip(*np.nonzero(dense >= thr)))
    assert set(zip(i.tolist(), j.tolist())) == want
    assert all(dense[x, y] == z for x, y, z in zip(i, j, v))
