#
# This file is part of einsum_gestures
# (c) Copyright 2026 by the einsum_gestures authors
# Licensed under the AGPL-3.0; see LICENSE.txt file.
#

"""
Catalog of the 21 arm gestures as parametric azimuth/range templates

Tag 1 sits on the right hand, tag 2 on the left hand. Azimuths are degrees from the
array broadside, ranges are meters from the reader; the performer stands about 3 m
away with the hands resting near -6 deg (right) and +6 deg (left).
"""

from dataclasses import dataclass
from einsum_gestures.simulation import TagTrajectory
import numpy as np

RIGHT, LEFT = -1.0, 1.0
TRAJECTORY_RATE_HZ = 100.0
AZIMUTH_LIMIT_DEG = 17.0


class GestureError(ValueError):
    def __init__(self, msg):
        super().__init__(msg)


def _ease(u):
    return 0.5 * (1.0 - np.cos(np.pi * u))


def _lateral_down(u, s):
    return s * (15.0 - 9.0 * _ease(u)), 3.0 - 0.05 * np.sin(np.pi * u)


def _lateral_front(u, s):
    return s * (15.0 - 12.0 * _ease(u)), 3.0 - 0.5 * _ease(u)


def _lateral_raise(u, s):
    return s * (6.0 + 9.0 * _ease(u)), 3.0 - 0.05 * np.sin(np.pi * u)


def _circle_in(u, s):
    return s * (9.0 + 5.0 * np.cos(2 * np.pi * u)), 3.0 + 0.25 * np.sin(2 * np.pi * u)


def _circle_out(u, s):
    return s * (9.0 + 5.0 * np.cos(2 * np.pi * u)), 3.0 - 0.25 * np.sin(2 * np.pi * u)


def _lift(u, s):
    return s * (6.0 - 2.0 * np.sin(np.pi * u)), 3.0 - 0.35 * np.sin(np.pi * u)


def _pull(u, s):
    # lateral offset stays fixed while the hand comes back toward the body
    range_m = 2.55 + 0.45 * _ease(u)
    return s * np.degrees(np.arcsin(2.55 * np.sin(np.radians(5.0)) / range_m)), range_m


def _push(u, s):
    range_m = 3.0 - 0.45 * _ease(u)
    return s * np.degrees(np.arcsin(3.0 * np.sin(np.radians(5.0)) / range_m)), range_m


def _round_ccw(u, s):
    return s * 5.0 + 3.0 * np.sin(2 * np.pi * u), 2.8 - 0.2 * np.cos(2 * np.pi * u)


def _round_cw(u, s):
    return s * 5.0 - 3.0 * np.sin(2 * np.pi * u), 2.8 - 0.2 * np.cos(2 * np.pi * u)


def _swipe_left(u, s):
    return 4.0 - 16.0 * _ease(u), 2.8 - 0.1 * np.sin(np.pi * u)


def _swipe_right(u, s):
    return -12.0 + 16.0 * _ease(u), 2.8 - 0.1 * np.sin(np.pi * u)


MOTIONS = {
    "lateral_down": _lateral_down,
    "lateral_front": _lateral_front,
    "lateral_raise": _lateral_raise,
    "circle_in": _circle_in,
    "circle_out": _circle_out,
    "lift": _lift,
    "pull": _pull,
    "push": _push,
    "round_ccw": _round_ccw,
    "round_cw": _round_cw,
    "swipe_left": _swipe_left,
    "swipe_right": _swipe_right,
}


@dataclass(frozen=True)
class Gesture:
    class_id: int
    code: str
    name: str
    right: str | None  # motion of tag 1, None = resting
    left: str | None  # motion of tag 2, None = resting

    @property
    def two_handed(self) -> bool:
        return self.right is not None and self.left is not None


CATALOG = (
    Gesture(1, "LD", "Lateral Down", "lateral_down", None),
    Gesture(2, "LF", "Lateral to Front", "lateral_front", None),
    Gesture(3, "LR", "Lateral Raise", "lateral_raise", None),
    Gesture(4, "LAC", "Left Arm Circle", None, "circle_in"),
    Gesture(5, "RAC", "Right Arm Circle", "circle_in", None),
    Gesture(6, "L", "Lift", "lift", None),
    Gesture(7, "Pl", "Pull", "pull", None),
    Gesture(8, "Ps", "Push", "push", None),
    Gesture(9, "LRo", "Left Round", "round_ccw", None),
    Gesture(10, "RR", "Right Round", "round_cw", None),
    Gesture(11, "SL", "Swipe Left", "swipe_left", None),
    Gesture(12, "SR", "Swipe Right", "swipe_right", None),
    Gesture(13, "2HLD", "Two Hands Lateral Down", "lateral_down", "lateral_down"),
    Gesture(14, "2HLF", "Two Hands Lateral to Front", "lateral_front", "lateral_front"),
    Gesture(15, "2HLR", "Two Hands Lateral Raise", "lateral_raise", "lateral_raise"),
    Gesture(16, "2HIC", "Two Hands Inward Circle", "circle_in", "circle_in"),
    Gesture(17, "2HOC", "Two Hands Outward Circle", "circle_out", "circle_out"),
    Gesture(18, "2HL", "Two Hands Lift", "lift", "lift"),
    Gesture(19, "2HPl", "Two Hands Pull", "pull", "pull"),
    Gesture(20, "2HPs", "Two Hands Push", "push", "push"),
    Gesture(21, "2HR", "Two Hands Round", "round_ccw", "round_ccw"),
)


def gesture(class_id: int) -> Gesture:
    if not isinstance(class_id, (int, np.integer)) or not 1 <= class_id <= len(CATALOG):
        raise GestureError(
            f"Unknown gesture class {class_id}; the catalog holds classes 1..{len(CATALOG)}."
        )
    return CATALOG[int(class_id) - 1]


def _hand_track(motion: str | None, side: float, u: np.ndarray, rng) -> tuple:
    if motion is None:
        # resting hand sways slightly
        sway = 0.3 * np.sin(2 * np.pi * rng.uniform(0.3, 0.8) * u + rng.uniform(0, 2 * np.pi))
        azimuth = side * 6.0 + rng.normal(0.0, 0.4) + sway
        range_m = 3.0 + rng.normal(0.0, 0.03) + 0.01 * sway
        return azimuth, range_m
    warp = float(np.exp(rng.normal(0.0, 0.05)))
    scale = float(np.clip(1.0 + rng.normal(0.0, 0.06), 0.8, 1.2))
    azimuth, range_m = MOTIONS[motion](u**warp, side)
    azimuth = azimuth.mean() + scale * (azimuth - azimuth.mean()) + rng.normal(0.0, 0.6)
    range_m = range_m * float(np.clip(1.0 + rng.normal(0.0, 0.02), 0.9, 1.1))
    return azimuth, range_m


def gesture_trajectory(class_id: int, duration_s: float = 2.0, seed: int = 0) -> tuple:
    """
    Trajectories (tag 1, tag 2) of one performance of a gesture.

    The template of the class fixes the shape; the seed draws the performer's
    variation (tempo warp, amplitude, offsets) and the sway of a resting hand.
    """
    g = gesture(class_id)
    if duration_s <= 0:
        raise GestureError(f"Gesture duration must be positive, got {duration_s}.")
    times = np.linspace(0.0, duration_s, int(round(duration_s * TRAJECTORY_RATE_HZ)) + 1)
    u = times / duration_s
    rng = np.random.default_rng(seed)
    tracks = list()
    for tag_id, motion, side in ((1, g.right, RIGHT), (2, g.left, LEFT)):
        azimuth, range_m = _hand_track(motion, side, u, rng)
        tracks.append(
            TagTrajectory(
                tag_id=tag_id,
                times_s=times,
                azimuth_deg=np.clip(
                    np.broadcast_to(azimuth, times.shape), -AZIMUTH_LIMIT_DEG, AZIMUTH_LIMIT_DEG
                ),
                range_m=np.broadcast_to(range_m, times.shape),
            )
        )
    return tuple(tracks)
