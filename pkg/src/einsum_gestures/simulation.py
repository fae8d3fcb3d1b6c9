#
# This file is part of einsum_gestures
# (c) Copyright 2026 by the einsum_gestures authors
# Licensed under the AGPL-3.0; see LICENSE.txt file.
#

"""
Simulate interleaved backscatter IQ captures from body-worn tags

The reader has a two-element array and a single receive chain (smart antenna
switching). Read slot 4k + 2m + i - 6 belongs to antenna m and tag i in cycle k, so
every cycle of four slots visits (1, 1), (1, 2), (2, 1), (2, 2) in that order.
Each read follows the round-trip received-signal model

    y = g sqrt(P) a_m(theta) s_m(k) + sum_l g_l sqrt(P) a_m(theta_l) s_m(k) + noise

with a doubled steering phase because the wave travels to the tag and back.
"""

from dataclasses import asdict, dataclass, field, replace
import jsonlines
from logging import getLogger
import numpy as np
from pathlib import Path

SPEED_OF_LIGHT = 299_792_458.0  # m/s
SLOTS_PER_CYCLE = 4

logger = getLogger(__name__)


class SimulationError(ValueError):
    def __init__(self, msg):
        super().__init__(msg)


@dataclass(frozen=True)
class ArrayGeometry:
    element_spacing_wavelengths: float = 0.8
    num_elements: int = 2
    carrier_frequency_hz: float = 915e6

    def __post_init__(self):
        if self.element_spacing_wavelengths <= 0:
            raise SimulationError(
                f"Element spacing must be positive, got {self.element_spacing_wavelengths}."
            )
        if self.num_elements != 2:
            raise SimulationError(
                f"Only two-element arrays are supported, got {self.num_elements}."
            )
        if self.carrier_frequency_hz <= 0:
            raise SimulationError(
                f"Carrier frequency must be positive, got {self.carrier_frequency_hz}."
            )

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_frequency_hz

    @property
    def unambiguous_azimuth_deg(self) -> float:
        """Largest |theta| for which the round-trip phase difference stays inside (-pi, pi)."""
        return float(
            np.degrees(np.arcsin(min(1.0, 1.0 / (4.0 * self.element_spacing_wavelengths))))
        )


@dataclass(frozen=True, eq=False)
class TagTrajectory:
    tag_id: int
    times_s: np.ndarray
    azimuth_deg: np.ndarray
    range_m: np.ndarray

    def __post_init__(self):
        for name in ("times_s", "azimuth_deg", "range_m"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        n = len(self.times_s)
        if len(self.azimuth_deg) != n or len(self.range_m) != n:
            raise SimulationError(
                f"Trajectory of tag {self.tag_id} has mismatched sample counts."
            )
        if n > 1 and np.any(np.diff(self.times_s) <= 0):
            raise SimulationError(
                f"Trajectory times of tag {self.tag_id} must be strictly increasing."
            )
        if np.any(self.range_m <= 0):
            raise SimulationError(f"Trajectory ranges of tag {self.tag_id} must be positive.")

    def __len__(self):
        return len(self.times_s)

    def at(self, t: np.ndarray) -> tuple:
        """Azimuth (deg) and range (m) linearly interpolated at times t."""
        return (
            np.interp(t, self.times_s, self.azimuth_deg),
            np.interp(t, self.times_s, self.range_m),
        )


@dataclass(frozen=True)
class NlosPath:
    gain_ratio: float = 0.2
    azimuth_deg: float = 25.0
    range_m: float = 4.0  # reader to scatterer


@dataclass(frozen=True)
class SimConfig:
    transmit_power: float = 1.0
    noise_variance: float = 0.003
    nlos_paths: tuple = (NlosPath(),)
    reads_per_second: float = 1600.0
    misdetect_rss_floor_db: float = -2.5
    rng_seed: int = 0
    # LoS amplitude is gain_calibration / range**2, i.e. 1.0 at 3 m
    gain_calibration: float = 9.0

    def __post_init__(self):
        paths = tuple(
            p if isinstance(p, NlosPath) else NlosPath(**p) for p in self.nlos_paths
        )
        object.__setattr__(self, "nlos_paths", paths)
        if self.noise_variance < 0:
            raise SimulationError(
                f"Noise variance must be non-negative, got {self.noise_variance}."
            )
        for p in paths:
            if not 0 <= p.gain_ratio < 1:
                raise SimulationError(
                    f"NLoS paths must be weaker than the LoS path, got gain ratio {p.gain_ratio}."
                )
        if self.reads_per_second <= 0:
            raise SimulationError(
                f"Read rate must be positive, got {self.reads_per_second}."
            )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["nlos_paths"] = [asdict(p) for p in self.nlos_paths]
        return d

    @classmethod
    def from_dict(cls, d: dict):
        d = dict(d)
        d["nlos_paths"] = tuple(NlosPath(**p) for p in d.get("nlos_paths", []))
        return cls(**d)


@dataclass(frozen=True, eq=False)
class IQCapture:
    """Interleaved reads in slot order; undetected reads keep iq == 0 and detected False."""

    slot: np.ndarray
    antenna: np.ndarray
    tag: np.ndarray
    iq: np.ndarray
    detected: np.ndarray
    num_cycles: int
    geometry: ArrayGeometry = field(default_factory=ArrayGeometry)
    config: SimConfig = field(default_factory=SimConfig)
    demodulated: bool = False

    @property
    def slot_period_s(self) -> float:
        return 1.0 / self.config.reads_per_second

    @property
    def tags(self) -> list:
        return sorted(int(t) for t in np.unique(self.tag))

    def slot_times(self, slots: np.ndarray) -> np.ndarray:
        return (np.asarray(slots) - 1) * self.slot_period_s

    def reads(self, antenna: int, tag: int) -> tuple:
        """Slots, iq values and detection mask of one (antenna, tag) pair."""
        sel = (self.antenna == antenna) & (self.tag == tag)
        return self.slot[sel], self.iq[sel], self.detected[sel]

    def __len__(self):
        return len(self.slot)


def steering_element(theta_deg: float, d_over_lambda: float, m: int) -> complex:
    """Round-trip steering response of element m (1-based) to a source at theta."""
    if m not in (1, 2):
        raise SimulationError(f"Element index must be 1 or 2, got {m}.")
    phase = 4.0 * np.pi * d_over_lambda * (m - 1) * np.sin(np.radians(theta_deg))
    return complex(np.exp(1j * phase))


def steering_vector(theta_deg, d_over_lambda: float) -> np.ndarray:
    """Both elements at once; shape (2,) for scalar theta, (2, n) for an array."""
    theta = np.radians(np.asarray(theta_deg, dtype=float))
    phase = 4.0 * np.pi * d_over_lambda * np.sin(theta)
    return np.stack([np.ones_like(phase, dtype=complex), np.exp(1j * phase)])


def slot_index(k, m, i):
    """Slot carrying antenna m and tag i in cycle k (all 1-based)."""
    return 4 * k + 2 * m + i - 6


def slot_owner(slot: int) -> tuple:
    """Inverse of slot_index: (k, m, i) for a 1-based slot number."""
    if slot < 1:
        raise SimulationError(f"Slots are numbered from 1, got {slot}.")
    r = (slot - 1) % SLOTS_PER_CYCLE
    return (slot - 1) // SLOTS_PER_CYCLE + 1, r // 2 + 1, r % 2 + 1


def carrier_phasor(slots, geom: ArrayGeometry, cfg: SimConfig) -> np.ndarray:
    """x(slot) = exp(j 2 pi f_c slot T_s), reduced modulo one cycle before the exponent."""
    cycles_per_slot = geom.carrier_frequency_hz / cfg.reads_per_second
    frac = np.mod(cycles_per_slot * np.asarray(slots, dtype=float), 1.0)
    return np.exp(2j * np.pi * frac)


def _round_trip_gain(range_m, path_m, amplitude_ratio, geom, cfg):
    amplitude = amplitude_ratio * cfg.gain_calibration / np.asarray(range_m) ** 2
    return amplitude * np.exp(-2j * np.pi * path_m / geom.wavelength_m)


def _noiseless_reads(trajectory, m, cycles, t0, geom, cfg):
    times = t0 + (cycles - 1) * SLOTS_PER_CYCLE / cfg.reads_per_second
    azimuth, rng_m = trajectory.at(times)
    d = geom.element_spacing_wavelengths
    signal = _round_trip_gain(rng_m, 2.0 * rng_m, 1.0, geom, cfg) * steering_vector(
        azimuth, d
    )[m - 1]
    tag_xy = np.stack([rng_m * np.sin(np.radians(azimuth)), rng_m * np.cos(np.radians(azimuth))])
    for path in cfg.nlos_paths:
        scatterer_xy = path.range_m * np.array(
            [np.sin(np.radians(path.azimuth_deg)), np.cos(np.radians(path.azimuth_deg))]
        )
        detour = np.linalg.norm(tag_xy - scatterer_xy[:, None], axis=0)
        signal = signal + _round_trip_gain(
            rng_m, 2.0 * (path.range_m + detour), path.gain_ratio, geom, cfg
        ) * steering_element(path.azimuth_deg, d, m)
    slots = slot_index(cycles, m, trajectory.tag_id)
    return slots, np.sqrt(cfg.transmit_power) * signal * carrier_phasor(slots, geom, cfg)


def synth_capture(trajectories, geom: ArrayGeometry, cfg: SimConfig) -> IQCapture:
    """Interleaved IQ reads of one or two tags following their trajectories."""
    if isinstance(trajectories, TagTrajectory):
        trajectories = [trajectories]
    trajectories = list(trajectories)
    if not trajectories or any(len(t) == 0 for t in trajectories):
        raise SimulationError("Cannot simulate an empty trajectory.")
    if cfg.transmit_power <= 0:
        raise SimulationError(
            f"Transmit power must be positive, got {cfg.transmit_power}."
        )
    tag_ids = [t.tag_id for t in trajectories]
    if len(set(tag_ids)) != len(tag_ids) or not set(tag_ids) <= {1, 2}:
        raise SimulationError(f"Expected distinct tag ids from {{1, 2}}, got {tag_ids}.")
    limit = geom.unambiguous_azimuth_deg
    for t in trajectories:
        if np.any(np.abs(t.azimuth_deg) >= limit):
            raise SimulationError(
                f"Tag {t.tag_id} leaves the field of view (|azimuth| < {limit:.2f} deg)."
            )

    t0 = min(t.times_s[0] for t in trajectories)
    duration = max(t.times_s[-1] for t in trajectories) - t0
    num_cycles = int(np.floor(duration * cfg.reads_per_second / SLOTS_PER_CYCLE)) + 1
    cycles = np.arange(1, num_cycles + 1)

    parts = []
    for trajectory in trajectories:
        for m in (1, 2):
            slots, iq = _noiseless_reads(trajectory, m, cycles, t0, geom, cfg)
            parts.append((slots, np.full(num_cycles, m), np.full(num_cycles, trajectory.tag_id), iq))
    slot = np.concatenate([p[0] for p in parts])
    order = np.argsort(slot, kind="stable")
    slot = slot[order]
    antenna = np.concatenate([p[1] for p in parts])[order]
    tag = np.concatenate([p[2] for p in parts])[order]
    clean = np.concatenate([p[3] for p in parts])[order]

    rng = np.random.default_rng(cfg.rng_seed)
    noise = (rng.standard_normal(len(slot)) + 1j * rng.standard_normal(len(slot))) * np.sqrt(
        cfg.noise_variance / 2.0
    )
    with np.errstate(divide="ignore"):
        clean_db = 20.0 * np.log10(np.abs(clean))
    detected = clean_db >= cfg.misdetect_rss_floor_db
    iq = np.where(detected, clean + noise, 0.0 + 0.0j)
    logger.debug(
        f"Simulated {len(slot)} reads over {num_cycles} cycles; "
        f"{int(np.sum(~detected))} misdetections."
    )
    return IQCapture(
        slot=slot,
        antenna=antenna,
        tag=tag,
        iq=iq,
        detected=detected,
        num_cycles=num_cycles,
        geometry=geom,
        config=cfg,
    )


def remove_carrier(cap: IQCapture) -> IQCapture:
    """Divide out the known transmit phasor s_m(k) of every read."""
    if cap.demodulated:
        return cap
    phasor = carrier_phasor(cap.slot, cap.geometry, cap.config)
    iq = np.where(cap.detected, cap.iq * np.conj(phasor), 0.0 + 0.0j)
    return replace(cap, iq=iq, demodulated=True)


@dataclass(frozen=True, eq=False)
class RawStream:
    times_s: np.ndarray
    rss_db: np.ndarray
    phase_rad: np.ndarray
    valid: np.ndarray


def iq_to_raw_streams(cap: IQCapture) -> dict:
    """RSS (dB) and wrapped phase per (tag, antenna); gaps hold NaN and valid == False."""
    if len(cap) == 0:
        raise SimulationError("Capture holds no reads.")
    streams = dict()
    for tag in cap.tags:
        for antenna in (1, 2):
            slots, iq, detected = cap.reads(antenna, tag)
            with np.errstate(divide="ignore"):
                rss = np.where(detected, 10.0 * np.log10(np.abs(iq) ** 2), np.nan)
            phase = np.where(detected, np.angle(iq), np.nan)
            # np.angle returns [-pi, pi]; fold -pi onto pi
            phase = np.where(phase == -np.pi, np.pi, phase)
            streams[(tag, antenna)] = RawStream(
                times_s=cap.slot_times(slots), rss_db=rss, phase_rad=phase, valid=detected
            )
    return streams


def write_capture(path: Path, cap: IQCapture, extra: dict = dict()):
    """One header record (geometry, config incl. seed) then one record per read."""
    header = {
        "record": "header",
        "geometry": asdict(cap.geometry),
        "config": cap.config.to_dict(),
        "num_cycles": cap.num_cycles,
        "demodulated": cap.demodulated,
    }
    header.update(extra)
    with jsonlines.open(path, mode="w") as writer:
        writer.write(header)
        writer.write_all(
            {
                "slot": int(s),
                "antenna": int(a),
                "tag": int(t),
                "i": float(z.real),
                "q": float(z.imag),
                "detected": bool(d),
            }
            for s, a, t, z, d in zip(cap.slot, cap.antenna, cap.tag, cap.iq, cap.detected)
        )


def read_capture(path: Path) -> tuple:
    """Returns (capture, header dict)."""
    with jsonlines.open(path) as reader:
        records = list(reader)
    if not records or records[0].get("record") != "header":
        raise SimulationError(f"Capture file {path} has no header record.")
    header, reads = records[0], records[1:]
    return (
        IQCapture(
            slot=np.array([r["slot"] for r in reads], dtype=int),
            antenna=np.array([r["antenna"] for r in reads], dtype=int),
            tag=np.array([r["tag"] for r in reads], dtype=int),
            iq=np.array([complex(r["i"], r["q"]) for r in reads]),
            detected=np.array([r["detected"] for r in reads], dtype=bool),
            num_cycles=int(header["num_cycles"]),
            geometry=ArrayGeometry(**header["geometry"]),
            config=SimConfig.from_dict(header["config"]),
            demodulated=bool(header["demodulated"]),
        ),
        header,
    )
