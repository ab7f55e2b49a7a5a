import io
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import OracleTracker
from podfusion.data import Detection, FrameRecord
from podfusion.errors import InvalidConfig, NonMonotonicFrame
from podfusion.geometry import BoundingBox, Point2
from podfusion.tracker import (
    CentroidTracker,
    TrackerConfig,
    format_assignments,
    format_track_table,
    greedy_pairs,
    read_track_table,
    run_sequence,
)


def box_at(cx, cy, size=10):
    return BoundingBox(cx - size / 2, cy - size / 2, size, size)


def test_first_frame():
    t = CentroidTracker()
    fa = t.step(0, [box_at(5, 5)])
    assert fa.assignments == ((0, 0),)
    assert fa.new_ids == (0,)


def test_stationary_persistence():
    t = CentroidTracker()
    ids = {t.step(f, [box_at(50, 50)]).assignments[0][1] for f in range(10)}
    assert ids == {0}


def test_expiry_after_five_missed_frames():
    t = CentroidTracker()
    t.step(0, [box_at(50, 50)])
    for f in range(1, 5):
        assert t.step(f, []).expired_ids == ()
    assert t.step(5, []).expired_ids == (0,)
    fa = t.step(6, [box_at(50, 50)])
    assert fa.assignments == ((0, 1),)


def test_reappearance_within_window_keeps_id():
    t = CentroidTracker()
    t.step(0, [box_at(50, 50)])
    for f in range(1, 5):
        t.step(f, [])
    assert t.step(5, [box_at(50, 50)]).assignments == ((0, 0),)


def test_global_greedy_example():
    pairs = greedy_pairs([Point2(0, 0), Point2(100, 0)], [Point2(10, 0), Point2(60, 0)])
    assert sorted(pairs) == [(0, 0), (1, 1)]
    # per-track nearest neighbour would pair both tracks against detection 1 first
    pairs = greedy_pairs([Point2(0, 0), Point2(50, 0)], [Point2(45, 0), Point2(-10, 0)])
    assert sorted(pairs) == [(0, 1), (1, 0)]


def test_max_match_distance():
    t = CentroidTracker(TrackerConfig(max_match_distance=5))
    t.step(0, [box_at(0, 0)])
    fa = t.step(1, [box_at(20, 0)])
    assert fa.new_ids == (1,)


def test_active_tracks():
    t = CentroidTracker(TrackerConfig(expiry_frames=1))
    assert t.active_tracks() == []
    t.step(0, [box_at(0, 0), box_at(100, 0)])
    assert [tr.id for tr in t.active_tracks()] == [0, 1]
    t.step(1, [box_at(0, 0)])
    assert [tr.id for tr in t.active_tracks()] == [0]
    assert [tr.id for tr in t.all_tracks()] == [0, 1]


def test_non_monotonic_frame():
    t = CentroidTracker()
    t.step(3, [])
    with pytest.raises(NonMonotonicFrame):
        t.step(3, [])


def test_config_validation():
    with pytest.raises(InvalidConfig):
        TrackerConfig(expiry_frames=0)
    with pytest.raises(InvalidConfig):
        TrackerConfig(max_match_distance=0)


def test_run_sequence_small_motion():
    frames = [FrameRecord(f, (Detection(box_at(10 + 2 * f, 50)),)) for f in range(30)]
    assignments, tracks = run_sequence(frames)
    assert len(tracks) == 1
    assert tracks[0].n_observations == 30
    assert run_sequence([]) == ([], [])


def test_crossing_objects_match_oracle():
    frames = []
    for f in range(40):
        frames.append([box_at(5 * f, 100), box_at(200 - 5 * f, 100 + f), box_at(100, 5 * f)])
    ours = CentroidTracker()
    oracle = OracleTracker()
    for f, boxes in enumerate(frames):
        fa = ours.step(f, boxes)
        expect, expired = oracle.step([b.as_tuple() for b in boxes])
        assert list(fa.assignments) == expect
        assert list(fa.expired_ids) == expired


def random_frames(rng, n_frames, max_objects):
    out = []
    for _ in range(n_frames):
        k = rng.randint(0, max_objects)
        out.append([box_at(rng.randint(0, 60) * 5, rng.randint(0, 40) * 5, rng.choice([4, 10])) for _ in range(k)])
    return out


@given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.sampled_from([1, 2, 5]))
def test_random_sequences_match_oracle(seed, max_objects, expiry):
    rng = random.Random(seed)
    ours = CentroidTracker(TrackerConfig(expiry_frames=expiry))
    oracle = OracleTracker(expiry)
    for f, boxes in enumerate(random_frames(rng, 30, max_objects)):
        fa = ours.step(f, boxes)
        expect, expired = oracle.step([b.as_tuple() for b in boxes])
        assert list(fa.assignments) == expect
        assert list(fa.expired_ids) == expired
        dets = [d for d, _ in fa.assignments]
        tids = [t for _, t in fa.assignments]
        assert len(set(dets)) == len(dets) and len(set(tids)) == len(tids)


@given(st.integers(0, 2**32 - 1))
def test_ids_monotonic_and_empty_frame_increments_missed(seed):
    rng = random.Random(seed)
    t = CentroidTracker(TrackerConfig(expiry_frames=10))
    seen = []
    for f, boxes in enumerate(random_frames(rng, 15, 4)):
        fa = t.step(f, boxes)
        seen.extend(fa.new_ids)
    assert seen == sorted(seen) and len(set(seen)) == len(seen)
    before = {tr.id: tr.missed_frames for tr in t.active_tracks()}
    t.step(100, [])
    after = {tr.id: tr.missed_frames for tr in t.active_tracks()}
    for tid, m in after.items():
        assert m == before[tid] + 1


def test_always_matched_track_never_expires():
    t = CentroidTracker(TrackerConfig(expiry_frames=1, max_match_distance=3))
    for f in range(50):
        fa = t.step(f, [box_at(f * 2.5, 0)])
        assert fa.assignments == ((0, 0),) and fa.expired_ids == ()


def test_output_formats():
    frames = [FrameRecord(0, (Detection(box_at(0, 0)), Detection(box_at(50, 0)))), FrameRecord(1, ())]
    assignments, tracks = run_sequence(frames)
    text = format_assignments(assignments)
    assert text.splitlines()[0] == '{"frame_id":0,"detection_index":0,"track_id":0}'
    table = format_track_table(tracks)
    assert read_track_table(io.StringIO(table)) == [(0, 0, 0, 1), (1, 0, 0, 1)]
    again, _ = run_sequence(frames)
    assert format_assignments(again) == text
