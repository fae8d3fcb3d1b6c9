#
# This file is part of einsum_gestures
# (c) Copyright 2026 by the einsum_gestures authors
# Licensed under the AGPL-3.0; see LICENSE.txt file.
#

"""
Estimate per-tag azimuth tracks with MUSIC and a Kalman smoother
"""

from dataclasses import dataclass
from einsum_gestures.simulation import (
    SLOTS_PER_CYCLE,
    ArrayGeometry,
    IQCapture,
    remove_carrier,
    steering_vector,
)
from filterpy.common import Q_continuous_white_noise
from filterpy.kalman import KalmanFilter
import jsonlines
from logging import getLogger
import numpy as np
from pathlib import Path
from scipy.linalg import eigh

DEGENERATE_GAP = 1e-12
INITIAL_VELOCITY_VARIANCE = 100.0  # (deg/s)**2

logger = getLogger(__name__)


class InsufficientReadsError(ValueError):
    def __init__(self, msg):
        super().__init__(msg)


class EstimationError(ValueError):
    def __init__(self, msg):
        super().__init__(msg)


@dataclass(frozen=True)
class FieldOfView:
    theta_min_deg: float
    theta_max_deg: float

    def __post_init__(self):
        if not self.theta_min_deg < self.theta_max_deg:
            raise EstimationError(
                f"Empty field of view [{self.theta_min_deg}, {self.theta_max_deg}]."
            )

    @classmethod
    def from_geometry(cls, geom: ArrayGeometry, half_width_deg: float | None = None):
        """Symmetric field of view inside the unambiguous azimuth range of the array."""
        limit = geom.unambiguous_azimuth_deg
        if half_width_deg is None:
            half_width_deg = limit
        if not 0 < half_width_deg <= limit:
            raise EstimationError(
                f"Field of view half-width {half_width_deg} deg must lie in (0, {limit:.2f}]."
            )
        return cls(-half_width_deg, half_width_deg)

    def contains(self, theta_deg) -> np.ndarray:
        theta = np.asarray(theta_deg)
        return (theta >= self.theta_min_deg) & (theta <= self.theta_max_deg)

    def grid(self, step_deg: float) -> np.ndarray:
        if step_deg <= 0:
            raise EstimationError(f"Grid step must be positive, got {step_deg}.")
        n = int(np.floor((self.theta_max_deg - self.theta_min_deg) / step_deg + 1e-9)) + 1
        return self.theta_min_deg + step_deg * np.arange(n)


@dataclass(frozen=True, eq=False)
class CovarianceEstimate:
    matrix: np.ndarray
    sample_count: int


@dataclass(frozen=True, eq=False)
class SubspaceSplit:
    signal_vector: np.ndarray
    noise_vector: np.ndarray
    eigenvalues: tuple  # (signal, noise), descending
    degenerate: bool = False


@dataclass(frozen=True, eq=False)
class AoATrack:
    times_s: np.ndarray
    azimuth_deg: np.ndarray
    valid_mask: np.ndarray
    smoothed: bool = False
    spectra: list | None = None  # per window (grid, spectrum) or None

    def __post_init__(self):
        n = len(self.times_s)
        if len(self.azimuth_deg) != n or len(self.valid_mask) != n:
            raise EstimationError("AoA track fields must have equal lengths.")

    def __len__(self):
        return len(self.times_s)

    @property
    def valid_count(self) -> int:
        return int(np.sum(self.valid_mask))


def pair_reads(cap: IQCapture, tag: int) -> tuple:
    """
    Nearest-slot pairing of the interleaved antenna reads of one tag.

    Antenna 2 reads tag i two slots after antenna 1 does in the same cycle; the read of
    the previous cycle is equally far away and loses the tie. A cycle contributes a
    pair only when both reads were detected. Returns (cycles, times_s, Y) with Y of
    shape (2, N).
    """
    slots_1, iq_1, det_1 = cap.reads(1, tag)
    slots_2, iq_2, det_2 = cap.reads(2, tag)
    cycles_1 = (slots_1 - 1) // SLOTS_PER_CYCLE + 1
    cycles_2 = (slots_2 - 1) // SLOTS_PER_CYCLE + 1
    common, i1, i2 = np.intersect1d(cycles_1, cycles_2, return_indices=True)
    both = det_1[i1] & det_2[i2]
    y = np.vstack([iq_1[i1][both], iq_2[i2][both]])
    return common[both], cap.slot_times(slots_1[i1][both]), y


def estimate_covariance(y: np.ndarray) -> CovarianceEstimate:
    """Sample covariance (1/N) Y Y^H of paired reads Y with shape (2, N)."""
    y = np.asarray(y, dtype=complex)
    if y.ndim != 2 or y.shape[0] != 2:
        raise EstimationError(f"Paired reads must have shape (2, N), got {y.shape}.")
    n = y.shape[1]
    if n < 2:
        raise InsufficientReadsError(f"Covariance needs at least 2 paired reads, got {n}.")
    r = y @ y.conj().T / n
    # exact Hermitian symmetry
    r = 0.5 * (r + r.conj().T)
    return CovarianceEstimate(matrix=r, sample_count=n)


def _canonical(v: np.ndarray) -> np.ndarray:
    """Unit vector with its largest-magnitude component real and positive."""
    v = v / np.linalg.norm(v)
    k = int(np.argmax(np.abs(v)))
    return v * np.exp(-1j * np.angle(v[k]))


def split_subspaces(cov: CovarianceEstimate) -> SubspaceSplit:
    """Eigenvector of the larger eigenvalue spans the signal, the other the noise."""
    r = np.asarray(cov.matrix, dtype=complex)
    if r.shape != (2, 2):
        raise EstimationError(f"Expected a 2x2 covariance, got shape {r.shape}.")
    if not np.allclose(r, r.conj().T, atol=1e-12):
        raise EstimationError("Covariance matrix is not Hermitian.")
    values, vectors = eigh(r)
    if values[0] < -1e-10 * max(1.0, abs(values[1])):
        raise EstimationError(f"Covariance matrix is not positive semidefinite: {values}.")
    lam_n, lam_s = max(values[0], 0.0), max(values[1], 0.0)
    degenerate = bool(lam_s - lam_n < DEGENERATE_GAP)
    if degenerate:
        logger.warning(
            f"Degenerate covariance (eigenvalues {lam_s:.3e}, {lam_n:.3e}); low-confidence split."
        )
    return SubspaceSplit(
        signal_vector=_canonical(vectors[:, 1]),
        noise_vector=_canonical(vectors[:, 0]),
        eigenvalues=(float(lam_s), float(lam_n)),
        degenerate=degenerate,
    )


def music_spectrum(
    split: SubspaceSplit, grid_deg: np.ndarray, d_over_lambda: float = 0.8
) -> np.ndarray:
    """P(theta) = 1 / |a(theta)^H u_n|^2 on the grid."""
    a = steering_vector(grid_deg, d_over_lambda)
    projection = np.abs(a.conj().T @ split.noise_vector) ** 2
    return 1.0 / np.maximum(projection, np.finfo(float).tiny)


def peak_index(spectrum: np.ndarray) -> int:
    """Index of the spectrum maximum; ties go to the first (lowest angle) sample."""
    return int(np.argmax(spectrum))


def music_peak(
    split: SubspaceSplit,
    fov: FieldOfView,
    grid_step_deg: float = 0.05,
    d_over_lambda: float = 0.8,
) -> tuple:
    """
    Grid search of the MUSIC pseudo-spectrum with parabolic peak refinement.

    Returns (theta_hat_deg, (grid_deg, spectrum)).
    """
    grid = fov.grid(grid_step_deg)
    spectrum = music_spectrum(split, grid, d_over_lambda)
    k = peak_index(spectrum)
    theta = float(grid[k])
    if 0 < k < len(grid) - 1:
        y0, y1, y2 = 10.0 * np.log10(spectrum[k - 1 : k + 2])
        curvature = y0 - 2.0 * y1 + y2
        # a tie with a neighbour keeps the lower grid angle
        if curvature < 0 and y0 != y1 and y1 != y2:
            offset = float(np.clip(0.5 * (y0 - y2) / curvature, -0.5, 0.5))
            theta = float(np.clip(theta + offset * grid_step_deg, fov.theta_min_deg, fov.theta_max_deg))
    return theta, (grid, spectrum)


def estimate_track(
    cap: IQCapture,
    tag: int,
    fov: FieldOfView,
    window: int = 64,
    hop: int = 32,
    grid_step_deg: float = 0.05,
    min_pairs: int = 16,
    keep_spectra: bool = False,
) -> AoATrack:
    """
    Raw (unsmoothed) azimuth track of one tag from sliding windows of read cycles.

    Windows with fewer than min_pairs paired reads are marked invalid.
    """
    if window < 2 or hop < 1:
        raise EstimationError(f"Invalid window/hop ({window}, {hop}).")
    cap = remove_carrier(cap)
    cycles, _, y = pair_reads(cap, tag)
    period = SLOTS_PER_CYCLE * cap.slot_period_s
    starts = range(1, max(cap.num_cycles - window + 1, 0) + 1, hop)
    times, thetas, valid, spectra = list(), list(), list(), list()
    for start in starts:
        stop = start + window
        times.append((start - 1 + 0.5 * (window - 1)) * period)
        sel = (cycles >= start) & (cycles < stop)
        if np.sum(sel) < max(min_pairs, 2):
            logger.warning(
                f"Tag {tag}: window at cycle {start} has {int(np.sum(sel))} paired reads "
                f"(< {min_pairs}); marked invalid."
            )
            thetas.append(np.nan)
            valid.append(False)
            spectra.append(None)
            continue
        split = split_subspaces(estimate_covariance(y[:, sel]))
        theta, spectrum = music_peak(
            split, fov, grid_step_deg, cap.geometry.element_spacing_wavelengths
        )
        thetas.append(theta)
        valid.append(True)
        spectra.append(spectrum)
    if not times:
        raise InsufficientReadsError(
            f"Capture has {cap.num_cycles} cycles, fewer than one window of {window}."
        )
    return AoATrack(
        times_s=np.array(times),
        azimuth_deg=np.array(thetas),
        valid_mask=np.array(valid, dtype=bool),
        spectra=spectra if keep_spectra else None,
    )


def kalman_smooth(
    raw: AoATrack, process_noise: float = 1.0, measurement_noise: float = 0.05
) -> AoATrack:
    """
    Constant angular velocity Kalman filter followed by a Rauch-Tung-Striebel pass.

    Invalid samples get a prediction only; the smoothed output fills them.
    """
    if raw.valid_count < 2:
        raise EstimationError(
            f"Smoothing needs at least 2 valid observations, got {raw.valid_count}."
        )
    if process_noise <= 0 or measurement_noise <= 0:
        raise EstimationError("Kalman noise parameters must be positive.")
    times = np.asarray(raw.times_s, dtype=float)
    first = int(np.argmax(raw.valid_mask))

    kf = KalmanFilter(dim_x=2, dim_z=1)
    kf.x = np.array([[raw.azimuth_deg[first]], [0.0]])
    kf.P = np.diag([measurement_noise, INITIAL_VELOCITY_VARIANCE])
    kf.H = np.array([[1.0, 0.0]])
    kf.R = np.array([[measurement_noise]])

    xs, ps, fs, qs = list(), list(), list(), list()
    for k in range(len(times)):
        dt = times[k] - times[k - 1] if k > 0 else 0.0
        f = np.array([[1.0, dt], [0.0, 1.0]])
        q = Q_continuous_white_noise(dim=2, dt=dt, spectral_density=process_noise)
        if k > 0:
            kf.predict(F=f, Q=q)
        kf.update(raw.azimuth_deg[k] if raw.valid_mask[k] else None)
        xs.append(kf.x.copy())
        ps.append(kf.P.copy())
        fs.append(f)
        qs.append(q)
    # fs[k] and qs[k] describe the transition into step k
    smoothed, _, _, _ = kf.rts_smoother(np.array(xs), np.array(ps), Fs=fs, Qs=qs)
    return AoATrack(
        times_s=times.copy(),
        azimuth_deg=smoothed[:, 0, 0],
        valid_mask=np.ones(len(times), dtype=bool),
        smoothed=True,
    )


def write_track(path: Path, tracks: dict, extra: dict = dict()):
    """One header record, then one record per (tag, window); spectra when present."""
    header = {"record": "header", "tags": sorted(int(t) for t in tracks)}
    header.update(extra)
    with jsonlines.open(path, mode="w") as writer:
        writer.write(header)
        for tag in sorted(tracks):
            track = tracks[tag]
            for k in range(len(track)):
                record = {
                    "tag": int(tag),
                    "t": float(track.times_s[k]),
                    "theta_deg": None if not track.valid_mask[k] else float(track.azimuth_deg[k]),
                    "valid": bool(track.valid_mask[k]),
                    "smoothed": track.smoothed,
                }
                if track.spectra is not None and track.spectra[k] is not None:
                    grid, spectrum = track.spectra[k]
                    record["spectrum_db"] = [
                        float(v) for v in 10.0 * np.log10(spectrum)
                    ]
                    record["grid_deg"] = [float(g) for g in grid]
                writer.write(record)


def read_track(path: Path) -> tuple:
    """Returns ({tag: AoATrack}, header)."""
    with jsonlines.open(path) as reader:
        records = list(reader)
    if not records or records[0].get("record") != "header":
        raise EstimationError(f"Track file {path} has no header record.")
    header, rows = records[0], records[1:]
    tracks = dict()
    for tag in header["tags"]:
        mine = [r for r in rows if r["tag"] == tag]
        tracks[tag] = AoATrack(
            times_s=np.array([r["t"] for r in mine]),
            azimuth_deg=np.array(
                [np.nan if r["theta_deg"] is None else r["theta_deg"] for r in mine]
            ),
            valid_mask=np.array([r["valid"] for r in mine], dtype=bool),
            smoothed=bool(mine[0]["smoothed"]) if mine else False,
        )
    return tracks, header
