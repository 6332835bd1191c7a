"""Occupancy-rate arithmetic, displacement, and the labeling state machine."""

import logging
import math

import numpy as np
import pytest

from evtrack.autolabel import (
    STILL_HITS_CAP,
    AutoLabeler,
    AutoLabelParams,
    autolabel_sequence,
    bbox_mask,
    normalized_displacement,
    occupancy_rate,
    rasterize_box,
)
from evtrack.errors import DegenerateBox, FrameMisalignment, ShapeMismatch
from evtrack.events import window_iter
from evtrack.labels import LabeledBox, label_csv_text
from evtrack.synth import generate

from conftest import make_window
from scene_utils import check_against_oracle, make_stop_scene

W, H = 200, 200


def box(x, y, w, h, tid=1, cls=0):
    return LabeledBox(x=x, y=y, w=w, h=h, class_id=cls, track_id=tid)


class TestBboxMask:
    def test_no_overlap_is_all_ones(self):
        b = box(0, 0, 4, 4)
        m = bbox_mask(b, [b, box(10, 10, 4, 4, tid=2)], W, H)
        assert m.shape == (4, 4) and m.all()

    def test_duplicate_box_zeroes_everything(self):
        b = box(5, 5, 4, 4)
        dup = box(5, 5, 4, 4, tid=2)
        assert not bbox_mask(b, [b, dup], W, H).any()

    def test_partial_overlap_pixels(self):
        b = box(0, 0, 4, 4)
        other = box(2, 2, 4, 4, tid=2)
        m = bbox_mask(b, [b, other], W, H)
        assert m.sum() == 12
        assert not m[2:, 2:].any()  # lower-right 2x2 zeroed

    def test_degenerate_box(self):
        with pytest.raises(DegenerateBox):
            bbox_mask(box(0, 0, 0, 4), [], W, H)

    def test_fractional_coordinates_round_half_away(self):
        assert rasterize_box(box(0.5, 0.4, 3.2, 3.8), W, H) == (1, 0, 4, 4)


class TestOccupancyRate:
    def test_no_features(self):
        assert occupancy_rate(np.zeros((3, 3)), np.ones((3, 3))) == 0.0

    def test_hand_counts(self):
        occ = np.array([[1, 0], [1, 1]])
        own = np.array([[1, 1], [0, 1]])
        # occ_true = 2, occ_false = 1
        assert occupancy_rate(occ, own) == 2 / 3

    def test_fully_overlapped_box(self):
        assert occupancy_rate(np.ones((2, 2)), np.zeros((2, 2))) == 0.0

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            occupancy_rate(np.zeros((2, 2)), np.zeros((2, 3)))

    def test_counts_partition_box_pixels(self, rng):
        for _ in range(50):
            occ = rng.integers(0, 2, (16, 16))
            own = rng.integers(0, 2, (16, 16))
            occ_true = int(((occ == 1) & (own == 1)).sum())
            occ_false = int(((occ == 0) & (own == 1)).sum())
            assert occ_true + occ_false == own.sum()
            expected = 0.0 if own.sum() == 0 else occ_true / (occ_true + occ_false)
            assert occupancy_rate(occ, own) == expected


class TestNormalizedDisplacement:
    def test_zero_motion(self):
        assert normalized_displacement((50, 50), (50, 50), 10, 10) == 0.0

    def test_three_four_five(self):
        d = normalized_displacement((110, 120), (113, 124), 100, 100)
        assert d == pytest.approx(0.05, abs=1e-12)

    def test_joint_scaling_invariance(self, rng):
        for _ in range(100):
            pc = rng.uniform(0, 500, 2)
            c = rng.uniform(0, 500, 2)
            w, h = rng.uniform(1, 200, 2)
            s = rng.uniform(0.1, 50)
            base = normalized_displacement(tuple(pc), tuple(c), w, h)
            scaled = normalized_displacement(tuple(pc * s), tuple(c * s), w * s, h * s)
            assert scaled == pytest.approx(base, abs=1e-12)

    def test_degenerate(self):
        with pytest.raises(DegenerateBox):
            normalized_displacement((0, 0), (1, 1), 0, 10)


def dense_events(x0, y0, w, h, n, polarity=1, t=100):
    """n events on distinct pixels inside the rect, row-major order."""
    events = []
    for k in range(n):
        events.append((t + k, x0 + k % w, y0 + (k // w) % h, polarity))
    return events


class TestStateMachine:
    def setup_method(self):
        self.params = AutoLabelParams()

    def test_first_occurrence_featureless_not_emitted(self):
        labeler = AutoLabeler(W, H, self.params)
        out = labeler.step(make_window([], width=W, height=H), [box(10, 10, 20, 20)])
        assert out == []
        assert labeler.state.still_hits[1] == 1  # counter persists even when dropped

    def test_first_occurrence_with_features_is_moving(self):
        labeler = AutoLabeler(W, H, self.params)
        w = make_window(dense_events(10, 10, 20, 20, 100), width=W, height=H)
        out = labeler.step(w, [box(10, 10, 20, 20)])
        assert [b.visibility for b in out] == [1.0]

    def _warmed_labeler(self):
        """Two moving frames so the track has a [1, 2] emission history."""
        labeler = AutoLabeler(W, H, self.params)
        for i in (1, 2):
            w = make_window(dense_events(10, 10, 100, 100, 2_000), index=i, width=W, height=H)
            out = labeler.step(w, [box(10 + i, 10, 100, 100)])
            assert [b.visibility for b in out] == [1.0]
        return labeler

    def test_still_branch_increments_and_saturates(self):
        labeler = self._warmed_labeler()
        for i in range(3, 12):
            # disp = 0.01 of the box, occupancy 0.05: both under threshold
            w = make_window(
                dense_events(12, 10, 100, 100, 500), index=i, width=W, height=H
            )
            out = labeler.step(w, [box(12 + (i - 2) * 1.0, 10, 100, 100)])
            assert [b.visibility for b in out] == [0.0]
        assert labeler.state.still_hits[1] == STILL_HITS_CAP

    def test_smoothing_branch_decrements(self):
        labeler = self._warmed_labeler()
        for i in (3, 4):
            w = make_window([], index=i, width=W, height=H)
            labeler.step(w, [box(12, 10, 100, 100)])
        assert labeler.state.still_hits[1] == 2
        # large displacement and occupancy 0.2: smoothing keeps it still
        w = make_window(dense_events(80, 10, 100, 100, 2_000), index=5, width=W, height=H)
        out = labeler.step(w, [box(80, 10, 100, 100)])
        assert [b.visibility for b in out] == [0.0]
        assert labeler.state.still_hits[1] == 1

    def test_still_emission_requires_two_prior_frames(self):
        labeler = AutoLabeler(W, H, self.params)
        w1 = make_window(dense_events(10, 10, 50, 50, 1_500), index=1, width=W, height=H)
        assert len(labeler.step(w1, [box(10, 10, 50, 50)])) == 1
        # second frame: still already; history is [1], not [i-2, i-1]
        out = labeler.step(make_window([], index=2, width=W, height=H), [box(10, 10, 50, 50)])
        assert out == []
        # third frame: track was dropped, so first-occurrence repeats; still dropped
        out = labeler.step(make_window([], index=3, width=W, height=H), [box(10, 10, 50, 50)])
        assert out == []

    def test_degenerate_box_skipped_with_warning(self, caplog):
        labeler = AutoLabeler(W, H, self.params)
        with caplog.at_level(logging.WARNING, logger="evtrack.autolabel"):
            out = labeler.step(
                make_window([], width=W, height=H),
                [box(10, 10, 0, 5), box(500, 500, 10, 10, tid=2)],
            )
        assert out == []
        assert "degenerate" in caplog.text and "outside frame" in caplog.text

    def test_frame_misalignment(self):
        labeler = AutoLabeler(W, H, self.params)
        with pytest.raises(FrameMisalignment):
            labeler.step(make_window([], index=3, width=W, height=H), [])

    def test_wake_after_phantom_hits_alternates(self):
        """Hit counters persist for tracks that were never emitted.

        A featureless box accumulates hits while being dropped; once it
        starts moving, the smoothing branch and the two-frame emission rule
        interact to alternate emit/drop for two frames per accumulated hit
        before the track stabilizes.
        """
        labeler = AutoLabeler(W, H, self.params)
        for i in range(1, 8):  # seven still, dropped frames: hits saturate
            assert labeler.step(make_window([], index=i, width=W, height=H),
                                [box(10, 10, 30, 30)]) == []
        assert labeler.state.still_hits[1] == STILL_HITS_CAP
        pattern = []
        for i in range(8, 21):
            w = make_window(dense_events(10, 10, 30, 30, 500), index=i, width=W, height=H)
            out = labeler.step(w, [box(10 + 2 * (i - 7), 10, 30, 30)])
            pattern.append(out[0].visibility if out else None)
        # emit/drop alternation while hits decay, then steady moving labels
        assert pattern == [1.0, None, 1.0, None, 1.0, None, 1.0, None, 1.0, None,
                           1.0, 1.0, 1.0]


class TestSequence:
    def test_labels_beyond_windows_rejected(self):
        windows = [make_window([], index=1)]
        with pytest.raises(FrameMisalignment):
            autolabel_sequence(windows, {5: [box(0, 0, 4, 4)]})

    def test_empty_inputs(self):
        assert autolabel_sequence([], {}) == {}

    def test_matches_analytic_oracle_outside_lag(self):
        spec = make_stop_scene(3)
        result = generate(spec)
        windows = list(window_iter(result.stream, spec.dt_us, min_frames=result.frames))
        labeled = autolabel_sequence(windows, result.labels)
        assert check_against_oracle(spec, labeled) == []

    def test_deterministic_output(self):
        spec = make_stop_scene(4)
        result = generate(spec)
        windows = list(window_iter(result.stream, spec.dt_us, min_frames=result.frames))
        a = autolabel_sequence(windows, result.labels)
        b = autolabel_sequence(windows, result.labels)
        assert label_csv_text(a, spec.dt_us) == label_csv_text(b, spec.dt_us)
