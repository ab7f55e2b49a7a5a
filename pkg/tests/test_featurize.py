import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from podfusion.data import Detection
from podfusion.errors import MalformedHeader, NonFiniteValue, ShapeMismatch, UnscoredDetection
from podfusion.featurize import FeatureGrid, detection_heatmap, load_feature_grid, save_feature_grid
from podfusion.geometry import BoundingBox

IMG = (640, 360)


def test_empty_heatmap():
    g = detection_heatmap([], IMG)
    assert g.shape == (3, 16, 16)
    assert not g.data.any()


def test_single_detection_center():
    d = Detection(BoundingBox(310, 170, 20, 20), 0.8)
    g = detection_heatmap([d], IMG)
    assert g.data[0, 8, 8] == 1
    assert g.data[1, 8, 8] == pytest.approx(0.8)
    assert g.data[2, 8, 8] == pytest.approx(400 / (640 * 360))
    g.data[:, 8, 8] = 0
    assert not g.data.any()


def test_unscored_rejected():
    with pytest.raises(UnscoredDetection):
        detection_heatmap([Detection(BoundingBox(0, 0, 1, 1))], IMG)


def random_dets(rng, n, spread=1.2):
    out = []
    for _ in range(n):
        w, h = rng.uniform(1, 30, 2)
        x = rng.uniform(-0.1 * IMG[0], spread * IMG[0])
        y = rng.uniform(-0.1 * IMG[1], spread * IMG[1])
        out.append(Detection(BoundingBox(x, y, w, h), float(rng.uniform(0, 1))))
    return out


def test_mass_conservation_250():
    dets = random_dets(np.random.default_rng(0), 250)
    assert detection_heatmap(dets, IMG).data[0].sum() == 250


@given(st.integers(0, 2**31), st.integers(0, 120), st.sampled_from([(16, 16), (8, 4), (1, 1)]))
def test_heatmap_properties(seed, n, grid):
    g = detection_heatmap(random_dets(np.random.default_rng(seed), n), IMG, grid).data
    assert g[0].sum() == n
    assert (g >= 0).all()
    assert (g[1] <= 1).all()
    assert g.shape == (3, grid[1], grid[0])


@given(st.integers(0, 2**31))
def test_translation_by_one_cell(seed):
    rng = np.random.default_rng(seed)
    cell = IMG[0] / 16
    dets = []
    for _ in range(30):
        col = rng.integers(1, 14)
        row = rng.integers(0, 16)
        cx = (col + 0.5) * cell
        cy = (row + 0.5) * IMG[1] / 16
        dets.append(Detection(BoundingBox(cx - 2, cy - 2, 4, 4), 0.5))
    moved = [Detection(d.box.translate(cell, 0), d.score) for d in dets]
    a = detection_heatmap(dets, IMG).data[0]
    b = detection_heatmap(moved, IMG).data[0]
    assert np.array_equal(b[:, 1:], a[:, :-1])


def test_load_tiny_grid(tmp_path):
    p = tmp_path / "g.pfg"
    p.write_bytes(b"PFGRID1\n" + struct.pack("<4I", 1, 1, 1, 1) + struct.pack("<f", 0.5))
    g = load_feature_grid(p)
    assert g == FeatureGrid(np.array([[[0.5]]]))


@pytest.mark.parametrize("text", [False, True])
def test_round_trip_bit_exact(tmp_path, text):
    rng = np.random.default_rng(1)
    g = FeatureGrid(rng.normal(size=(3, 8, 5)).astype(np.float32))
    p = tmp_path / "g"
    save_feature_grid(g, p, text=text)
    back = load_feature_grid(p)
    assert back == g
    assert back.data.tobytes() == g.data.tobytes()


def test_shape_mismatch(tmp_path):
    p = tmp_path / "g"
    p.write_bytes(b"PFGRID1\n" + struct.pack("<4I", 3, 8, 8, 192) + np.zeros(100, "<f4").tobytes())
    with pytest.raises(ShapeMismatch):
        load_feature_grid(p)
    p.write_text("PFGRID-TEXT 3 8 8 192\n" + "0\n" * 100)
    with pytest.raises(ShapeMismatch):
        load_feature_grid(p)


def test_header_and_value_errors(tmp_path):
    p = tmp_path / "g"
    p.write_bytes(b"PFGRID1\n\x01")
    with pytest.raises(MalformedHeader):
        load_feature_grid(p)
    p.write_bytes(b"garbage")
    with pytest.raises(MalformedHeader):
        load_feature_grid(p)
    p.write_text("PFGRID-TEXT 1 1 x 1\n0\n")
    with pytest.raises(MalformedHeader):
        load_feature_grid(p)
    p.write_text("PFGRID-TEXT 1 1 1 1\nnan\n")
    with pytest.raises(NonFiniteValue):
        load_feature_grid(p)
    with pytest.raises(NonFiniteValue):
        FeatureGrid(np.full((1, 1, 1), np.inf))
