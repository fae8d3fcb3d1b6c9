#
# This file is part of einsum_gestures
# (c) Copyright 2026 by the einsum_gestures authors
# Licensed under the AGPL-3.0; see LICENSE.txt file.
#

"""
Turn raw RSS, phase and AoA streams into fixed-length signal frames

Pipeline order per channel:
    RSS   -> min-max normalize -> resample
    phase -> unwrap -> Savitzky-Golay -> Gaussian -> resample
    AoA   -> (Kalman smoothed upstream) -> resample
"""

from dataclasses import dataclass, field
import jsonlines
from logging import getLogger
import numpy as np
from pathlib import Path
from scipy import signal
from scipy.ndimage import gaussian_filter1d

FRAME_LENGTH = 35

logger = getLogger(__name__)


class DegenerateSignalError(ValueError):
    def __init__(self, msg):
        super().__init__(msg)


class FilterParameterError(ValueError):
    def __init__(self, msg):
        super().__init__(msg)


def minmax_normalize(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if len(x) < 2:
        raise FilterParameterError(f"Min-max normalization needs 2+ samples, got {len(x)}.")
    lo, hi = np.min(x), np.max(x)
    if hi == lo:
        raise DegenerateSignalError(f"Cannot normalize a constant signal (value {lo}).")
    return (x - lo) / (hi - lo)


def unwrap_phase(x) -> np.ndarray:
    """Add multiples of 2 pi so successive differences lie in (-pi, pi]; x[0] is kept."""
    out = np.unwrap(np.asarray(x, dtype=float))
    # np.unwrap leaves a jump of exactly -pi in place
    low = np.diff(out) <= -np.pi
    if low.any():
        out[1:] += 2.0 * np.pi * np.cumsum(low)
    return out


def savgol_filter(x, window: int = 11, polyorder: int = 3) -> np.ndarray:
    """Least-squares local polynomial smoothing; edge windows fit the end segment."""
    x = np.asarray(x, dtype=float)
    if window % 2 != 1 or window < 1:
        raise FilterParameterError(f"Savitzky-Golay window must be odd, got {window}.")
    if not 0 <= polyorder < window:
        raise FilterParameterError(
            f"Polynomial order must be in [0, {window}), got {polyorder}."
        )
    if window > len(x):
        raise FilterParameterError(
            f"Savitzky-Golay window {window} exceeds the signal length {len(x)}."
        )
    return signal.savgol_filter(x, window_length=window, polyorder=polyorder, mode="interp")


def gaussian_filter(x, sigma: float = 2.0) -> np.ndarray:
    """Normalized Gaussian kernel truncated at 4 sigma, half-sample mirrored edges."""
    if sigma <= 0:
        raise FilterParameterError(f"Gaussian sigma must be positive, got {sigma}.")
    return gaussian_filter1d(np.asarray(x, dtype=float), sigma, mode="reflect", truncate=4.0)


def resample_35(x, times=None, valid=None, length: int = FRAME_LENGTH) -> np.ndarray:
    """
    Linear interpolation over the valid samples onto `length` uniformly spaced points
    spanning the full time range of the input.

    Gaps are given by `valid` or by NaN values.
    """
    x = np.asarray(x, dtype=float)
    times = np.arange(len(x), dtype=float) if times is None else np.asarray(times, dtype=float)
    if len(times) != len(x):
        raise FilterParameterError("Samples and times must have equal lengths.")
    mask = np.isfinite(x) if valid is None else np.asarray(valid, dtype=bool) & np.isfinite(x)
    if np.sum(mask) < 2:
        raise FilterParameterError(
            f"Resampling needs at least 2 valid samples, got {int(np.sum(mask))}."
        )
    if len(x) == length and mask.all() and np.allclose(np.diff(times), times[1] - times[0]):
        return x.copy()
    targets = np.linspace(times[0], times[-1], length)
    return np.interp(targets, times[mask], x[mask])


@dataclass(frozen=True)
class PreprocessParams:
    savgol_window: int = 11
    savgol_polyorder: int = 3
    gaussian_sigma: float = 2.0
    frame_length: int = FRAME_LENGTH


@dataclass(eq=False)
class SignalFrame:
    """Named fixed-length channels of one gesture sample."""

    channels: dict = field(default_factory=dict)
    label: int | None = None
    sample_id: str = ""

    def __getitem__(self, name: str) -> np.ndarray:
        return self.channels[name]

    @property
    def names(self) -> list:
        return list(self.channels.keys())

    def check(self, length: int = FRAME_LENGTH):
        for name, values in self.channels.items():
            if len(values) != length or not np.all(np.isfinite(values)):
                raise DegenerateSignalError(
                    f"Frame {self.sample_id} channel {name} is not {length} finite samples."
                )
            if name.startswith("rss_") and (np.min(values) < 0 or np.max(values) > 1):
                raise DegenerateSignalError(
                    f"Frame {self.sample_id} channel {name} leaves [0, 1]."
                )


def _check_reads(valid: np.ndarray, needed: int, channel: str):
    if np.sum(valid) < needed:
        raise DegenerateSignalError(
            f"{channel} channel has {int(np.sum(valid))} detected reads, needs {needed}."
        )


def rss_channel(stream, params: PreprocessParams = PreprocessParams()) -> np.ndarray:
    valid = np.asarray(stream.valid, dtype=bool)
    _check_reads(valid, 2, "RSS")
    normalized = np.full(len(valid), np.nan)
    normalized[valid] = minmax_normalize(stream.rss_db[valid])
    return resample_35(normalized, stream.times_s, valid, params.frame_length)


def phase_channel(stream, params: PreprocessParams = PreprocessParams()) -> np.ndarray:
    valid = np.asarray(stream.valid, dtype=bool)
    _check_reads(valid, max(2, params.savgol_window), "Phase")
    times = np.asarray(stream.times_s)[valid]
    phase = unwrap_phase(np.asarray(stream.phase_rad)[valid])
    phase = savgol_filter(phase, params.savgol_window, params.savgol_polyorder)
    phase = gaussian_filter(phase, params.gaussian_sigma)
    return resample_35(phase, times, None, params.frame_length)


def aoa_channel(track, params: PreprocessParams = PreprocessParams()) -> np.ndarray:
    if not track.smoothed:
        logger.warning("Resampling an AoA track that was not smoothed.")
    return resample_35(track.azimuth_deg, track.times_s, track.valid_mask, params.frame_length)


def build_frame(
    streams: dict,
    tracks: dict,
    label: int | None = None,
    sample_id: str = "",
    params: PreprocessParams = PreprocessParams(),
) -> SignalFrame:
    """
    Frame from raw streams keyed (tag, antenna) and AoA tracks keyed by tag.

    Raises DegenerateSignalError for a constant RSS channel or a stream with too few
    detected reads to filter.
    """
    channels = dict()
    for tag, antenna in sorted(streams):
        channels[f"rss_t{tag}_a{antenna}"] = rss_channel(streams[(tag, antenna)], params)
    for tag, antenna in sorted(streams):
        channels[f"phase_t{tag}_a{antenna}"] = phase_channel(streams[(tag, antenna)], params)
    for tag in sorted(tracks):
        channels[f"aoa_t{tag}"] = aoa_channel(tracks[tag], params)
    frame = SignalFrame(channels=channels, label=label, sample_id=sample_id)
    frame.check(params.frame_length)
    return frame


def write_frames(path: Path, frames: list, mode: str = "w"):
    with jsonlines.open(path, mode=mode) as writer:
        writer.write_all(
            {
                "sample_id": f.sample_id,
                "label": f.label,
                "channels": {k: [float(v) for v in values] for k, values in f.channels.items()},
            }
            for f in frames
        )


def read_frames(path: Path) -> list:
    with jsonlines.open(path) as reader:
        return [
            SignalFrame(
                channels={k: np.array(v) for k, v in r["channels"].items()},
                label=r["label"],
                sample_id=r["sample_id"],
            )
            for r in reader
        ]
