"""Peak decoding, greedy association, and the permanence state machine."""

import numpy as np
import pytest

from evtrack.errors import OutOfOrderFrame, ShapeMismatch
from evtrack.labels import LabeledBox
from evtrack.tracker import (
    Detection,
    HeadMaps,
    PermanenceTracker,
    Track,
    associate,
    decode_detections,
    read_head_maps_dir,
    write_head_maps,
)

GRID = (12, 16)  # cells, so 48 x 64 pixels at r = 4


def empty_maps(classes=1, grid=GRID):
    h, w = grid
    return HeadMaps(
        heatmap=np.zeros((classes, h, w)),
        size=np.zeros((2, h, w)),
        offset=np.zeros((2, h, w)),
        displacement=np.zeros((2, h, w)),
        visibility=np.zeros((h, w)),
        consistency=np.zeros((h, w)),
    )


def det(cx, cy, w=8.0, h=8.0, cls=0, score=0.9, dx=0.0, dy=0.0, vis=1.0):
    return Detection(cx=cx, cy=cy, w=w, h=h, class_id=cls, score=score,
                     dx=dx, dy=dy, visibility=vis)


def track(tid, cx, cy, w=8.0, h=8.0, cls=0, still=False):
    return Track(track_id=tid, class_id=cls, cx=cx, cy=cy, w=w, h=h,
                 score=0.9, still=still)


class TestDecode:
    def test_single_peak_center_arithmetic(self):
        maps = empty_maps()
        maps.heatmap[0, 5, 10] = 0.9
        maps.offset[:, 5, 10] = (0.5, 0.5)
        maps.size[:, 5, 10] = (12.0, 10.0)
        maps.displacement[:, 5, 10] = (-2.0, 1.0)
        maps.visibility[5, 10] = 0.25
        (d,) = decode_detections(maps, conf_thresh=0.4)
        assert (d.cx, d.cy) == (42.0, 22.0)
        assert (d.w, d.h) == (12.0, 10.0)
        assert (d.dx, d.dy) == (-2.0, 1.0)
        assert d.visibility == 0.25 and d.score == 0.9 and d.class_id == 0

    def test_uniform_zero_heatmap(self):
        assert decode_detections(empty_maps()) == []

    def test_plateau_emits_both(self):
        maps = empty_maps()
        maps.heatmap[0, 3, 4] = 0.8
        maps.heatmap[0, 3, 5] = 0.8
        dets = decode_detections(maps, conf_thresh=0.4)
        assert len(dets) == 2

    def test_below_threshold_ignored(self):
        maps = empty_maps()
        maps.heatmap[0, 3, 4] = 0.3
        assert decode_detections(maps, conf_thresh=0.4) == []

    def test_top_k_limits_output(self):
        maps = empty_maps()
        maps.heatmap[0, 1::3, 1::3] = 0.9
        assert len(decode_detections(maps, conf_thresh=0.4, top_k=3)) == 3

    def test_shape_mismatch(self):
        h, w = GRID
        with pytest.raises(ShapeMismatch):
            HeadMaps(
                heatmap=np.zeros((1, h, w)),
                size=np.zeros((2, h, w + 1)),
                offset=np.zeros((2, h, w)),
                displacement=np.zeros((2, h, w)),
                visibility=np.zeros((h, w)),
            )

    def test_deterministic_order(self):
        maps = empty_maps()
        maps.heatmap[0, 2, 2] = 0.7
        maps.heatmap[0, 8, 8] = 0.7
        maps.heatmap[0, 5, 5] = 0.9
        dets = decode_detections(maps, conf_thresh=0.4)
        keys = [(d.score, d.cy, d.cx) for d in dets]
        assert keys == [(0.9, 20.0, 20.0), (0.7, 8.0, 8.0), (0.7, 32.0, 32.0)]


class TestAssociate:
    def test_displacement_prediction_matches(self):
        tracks = [track(1, 100.0, 100.0)]
        d = det(104.0, 103.0, dx=-4.0, dy=-3.0)
        matches, unmatched_tracks, unmatched_dets = associate(tracks, [d])
        assert matches == [(tracks[0], d)]
        assert unmatched_tracks == [] and unmatched_dets == []

    def test_outside_gate_unmatched(self):
        tracks = [track(1, 100.0, 100.0)]
        d = det(200.0, 200.0, w=4.0, h=4.0)  # gate = 4
        _, unmatched_tracks, unmatched_dets = associate(tracks, [d])
        assert unmatched_dets == [d] and unmatched_tracks == tracks

    def test_higher_score_wins_contested_track(self):
        tracks = [track(1, 100.0, 100.0)]
        weak = det(101.0, 100.0, score=0.5)
        strong = det(100.0, 101.0, score=0.9)
        matches, _, unmatched_dets = associate(tracks, [weak, strong])
        assert matches == [(tracks[0], strong)]
        assert unmatched_dets == [weak]

    def test_class_must_agree(self):
        tracks = [track(1, 100.0, 100.0, cls=1)]
        d = det(100.0, 100.0, cls=0)
        _, unmatched_tracks, unmatched_dets = associate(tracks, [d])
        assert unmatched_dets == [d] and unmatched_tracks == tracks

    def test_empty_inputs(self):
        assert associate([], []) == ([], [], [])


class TestStep:
    def test_spawn_assigns_distinct_ids(self):
        tracker = PermanenceTracker()
        boxes = tracker.step([det(10, 10), det(30, 30), det(50, 50)])
        assert sorted(b.track_id for b in boxes) == [1, 2, 3]

    def test_still_track_replayed_through_long_gap(self):
        tracker = PermanenceTracker()
        tracker.step([det(40, 40, vis=0.1)], 1)
        replayed = [tracker.step([], 1 + k) for k in range(1, 601)]
        assert all(len(frame) == 1 for frame in replayed)
        first = replayed[0][0]
        assert all(
            (b.x, b.y, b.w, b.h, b.track_id) == (first.x, first.y, first.w, first.h, 1)
            for frame in replayed
            for b in frame
        )

    def test_moving_track_hidden_then_dropped(self):
        tracker = PermanenceTracker(max_age_move=5)
        tracker.step([det(40, 40, vis=0.9)], 1)
        for k in range(2, 8):
            assert tracker.step([], k) == []
        assert tracker.tracks == []

    def test_moving_track_rematched_before_drop(self):
        tracker = PermanenceTracker(max_age_move=5)
        tracker.step([det(40, 40, vis=0.9)], 1)
        tracker.step([], 2)
        boxes = tracker.step([det(41, 40, vis=0.9)], 3)
        assert [b.track_id for b in boxes] == [1]

    def test_dropped_identity_never_returns(self):
        tracker = PermanenceTracker(max_age_move=2)
        tracker.step([det(40, 40, vis=0.9)], 1)
        tracker.step([], 2)
        tracker.step([], 3)
        boxes = tracker.step([det(40, 40, vis=0.9)], 4)
        assert [b.track_id for b in boxes] == [2]

    def test_permanence_off_drops_still_tracks(self):
        tracker = PermanenceTracker(permanence=False, max_age_move=5)
        tracker.step([det(40, 40, vis=0.1)], 1)
        emitted = [tracker.step([], k) for k in range(2, 10)]
        assert all(frame == [] for frame in emitted)
        assert tracker.tracks == []

    def test_out_of_order_frame(self):
        tracker = PermanenceTracker()
        tracker.step([], 5)
        with pytest.raises(OutOfOrderFrame):
            tracker.step([], 5)

    def test_emitted_visibility_reflects_still_flag(self):
        tracker = PermanenceTracker()
        (moving,) = tracker.step([det(40, 40, vis=0.9)], 1)
        assert moving.visibility == 1.0
        (still,) = tracker.step([det(40, 40, vis=0.1)], 2)
        assert still.visibility == 0.0


class TestHeadMapFiles:
    def test_round_trip(self, tmp_path):
        maps = empty_maps()
        maps.heatmap[0, 5, 10] = 0.9
        maps.size[:, 5, 10] = (12.0, 10.0)
        write_head_maps(tmp_path, 3, maps)
        ((frame, loaded),) = list(read_head_maps_dir(tmp_path))
        assert frame == 3
        dets = decode_detections(loaded, conf_thresh=0.4)
        assert len(dets) == 1 and dets[0].w == 12.0
