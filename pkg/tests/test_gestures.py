#
# This file is part of einsum_gestures
# (c) Copyright 2026 by the einsum_gestures authors
# Licensed under the AGPL-3.0; see LICENSE.txt file.
#

"""
Test the einsum_gestures.gestures module
"""

from einsum_gestures.gestures import (
    AZIMUTH_LIMIT_DEG,
    CATALOG,
    GestureError,
    gesture,
    gesture_trajectory,
)
import numpy as np
from pytest import raises


class TestCatalog:
    def test_size(self):
        assert len(CATALOG) == 21
        assert [g.class_id for g in CATALOG] == list(range(1, 22))

    def test_unique_codes(self):
        assert len({g.code for g in CATALOG}) == 21

    def test_two_handed(self):
        assert sum(g.two_handed for g in CATALOG) == 9
        assert gesture(13).code == "2HLD"
        assert not gesture(11).two_handed

    def test_unknown(self):
        for bad in (0, 22, -1):
            with raises(GestureError):
                gesture(bad)


class TestTrajectory:
    def test_swipe_left_decreasing(self):
        right, _ = gesture_trajectory(11, 2.0, seed=7)
        assert np.all(np.diff(right.azimuth_deg) <= 0)
        assert right.azimuth_deg[0] - right.azimuth_deg[-1] > 10.0

    def test_deterministic(self):
        a = gesture_trajectory(16, 2.0, seed=3)
        b = gesture_trajectory(16, 2.0, seed=3)
        for x, y in zip(a, b):
            assert np.array_equal(x.azimuth_deg, y.azimuth_deg)
            assert np.array_equal(x.range_m, y.range_m)

    def test_tags(self):
        right, left = gesture_trajectory(1)
        assert (right.tag_id, left.tag_id) == (1, 2)
        assert len(right) == 201

    def test_same_shape_across_seeds(self):
        for g in CATALOG:
            a = gesture_trajectory(g.class_id, 2.0, seed=1)
            b = gesture_trajectory(g.class_id, 2.0, seed=2)
            for motion, x, y in zip((g.right, g.left), a, b):
                if motion is None:
                    continue
                assert not np.allclose(x.azimuth_deg, y.azimuth_deg)
                assert np.corrcoef(x.azimuth_deg, y.azimuth_deg)[0, 1] > 0.9

    def test_resting_hand(self):
        right, left = gesture_trajectory(11, seed=4)
        assert np.all(np.abs(left.azimuth_deg - 6.0) < 2.5)
        right, left = gesture_trajectory(4, seed=4)
        assert np.all(np.abs(right.azimuth_deg + 6.0) < 2.5)

    def test_mirrored_hands(self):
        right, left = gesture_trajectory(15, seed=0)
        assert np.mean(right.azimuth_deg) < 0 < np.mean(left.azimuth_deg)

    def test_inside_field_of_view(self):
        for g in CATALOG:
            for seed in range(3):
                for t in gesture_trajectory(g.class_id, seed=seed):
                    assert np.all(np.abs(t.azimuth_deg) <= AZIMUTH_LIMIT_DEG)
                    assert np.all(t.range_m > 2.0)

    def test_bad_duration(self):
        with raises(GestureError):
            gesture_trajectory(1, 0.0)
