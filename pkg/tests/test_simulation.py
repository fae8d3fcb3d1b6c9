#
# This file is part of einsum_gestures
# (c) Copyright 2026 by the einsum_gestures authors
# Licensed under the AGPL-3.0; see LICENSE.txt file.
#

"""
Test the einsum_gestures.simulation module
"""

from dataclasses import replace
from einsum_gestures.aoa import estimate_covariance, pair_reads
from einsum_gestures.simulation import (
    ArrayGeometry,
    IQCapture,
    NlosPath,
    SimConfig,
    SimulationError,
    TagTrajectory,
    iq_to_raw_streams,
    read_capture,
    remove_carrier,
    slot_index,
    slot_owner,
    steering_element,
    synth_capture,
    write_capture,
)
import numpy as np
from pytest import approx, raises


def static_trajectory(tag_id=1, azimuth=10.0, range_m=3.0, duration=0.1):
    return TagTrajectory(
        tag_id=tag_id,
        times_s=[0.0, duration],
        azimuth_deg=[azimuth, azimuth],
        range_m=[range_m, range_m],
    )


class TestSteering:
    def test_broadside(self):
        assert steering_element(0.0, 0.8, 2) == approx(1 + 0j)

    def test_reference_element(self):
        assert steering_element(12.3, 0.8, 1) == 1 + 0j

    def test_ambiguity_edge(self):
        assert steering_element(18.21, 0.8, 2) == approx(-1 + 0j, abs=1e-3)

    def test_thirty_degrees(self):
        assert steering_element(30.0, 0.8, 2) == approx(np.exp(1j * 1.6 * np.pi))

    def test_bad_element(self):
        with raises(SimulationError):
            steering_element(0.0, 0.8, 3)

    def test_unambiguous_range(self):
        assert ArrayGeometry().unambiguous_azimuth_deg == approx(18.21, abs=0.01)


class TestInterleave:
    def test_first_cycle_order(self):
        assert [slot_index(1, m, i) for m in (1, 2) for i in (1, 2)] == [1, 2, 3, 4]

    def test_every_slot_has_one_owner(self):
        owners = [slot_owner(s) for s in range(1, 401)]
        assert len(set(owners)) == 400
        for s, (k, m, i) in zip(range(1, 401), owners):
            assert slot_index(k, m, i) == s

    def test_slot_zero(self):
        with raises(SimulationError):
            slot_owner(0)


class TestSynthCapture:
    @classmethod
    def setup_class(cls):
        cls.geom = ArrayGeometry()
        cls.clean = SimConfig(noise_variance=0.0, nlos_paths=(), misdetect_rss_floor_db=-100.0)

    def test_antenna_phase_difference(self):
        cap = remove_carrier(synth_capture(static_trajectory(), self.geom, self.clean))
        _, iq_1, _ = cap.reads(1, 1)
        _, iq_2, _ = cap.reads(2, 1)
        ratio = iq_2 / iq_1
        expected = np.exp(1j * 4 * np.pi * 0.8 * np.sin(np.radians(10.0)))
        assert np.allclose(ratio / np.abs(ratio), expected, atol=1e-9)

    def test_inverse_square_amplitude(self):
        near = synth_capture(static_trajectory(range_m=3.0), self.geom, self.clean)
        far = synth_capture(static_trajectory(range_m=6.0), self.geom, self.clean)
        assert np.allclose(np.abs(far.iq), np.abs(near.iq) / 4.0)

    def test_unit_amplitude_at_three_meters(self):
        cap = synth_capture(static_trajectory(), self.geom, self.clean)
        assert np.allclose(np.abs(cap.iq), 1.0)

    def test_energy_scaling(self):
        base = synth_capture(static_trajectory(), self.geom, self.clean)
        loud = synth_capture(
            static_trajectory(), self.geom, replace(self.clean, transmit_power=4.0)
        )
        assert np.allclose(np.abs(loud.iq), 2.0 * np.abs(base.iq))

    def test_noise_variance(self):
        noisy_cfg = replace(self.clean, noise_variance=0.003, rng_seed=11)
        trajectories = [
            static_trajectory(1, -5.0, duration=7.0),
            static_trajectory(2, 5.0, duration=7.0),
        ]
        noisy = synth_capture(trajectories, self.geom, noisy_cfg)
        clean = synth_capture(trajectories, self.geom, self.clean)
        assert len(noisy) >= 10_000
        residual = noisy.iq - clean.iq
        assert np.mean(np.abs(residual) ** 2) == approx(0.003, rel=0.05)

    def test_determinism(self):
        cfg = SimConfig(rng_seed=5)
        a = synth_capture(static_trajectory(), self.geom, cfg)
        b = synth_capture(static_trajectory(), self.geom, cfg)
        assert np.array_equal(a.iq, b.iq)
        assert np.array_equal(a.detected, b.detected)

    def test_cycle_count(self):
        cap = synth_capture(static_trajectory(duration=2.0), self.geom, SimConfig())
        assert cap.num_cycles == 801
        assert len(cap) == 2 * 801

    def test_interleave(self):
        cap = synth_capture(
            [static_trajectory(1, -5.0), static_trajectory(2, 5.0)], self.geom, self.clean
        )
        assert np.array_equal(cap.slot, np.arange(1, len(cap) + 1))
        for s, m, i in zip(cap.slot, cap.antenna, cap.tag):
            assert slot_owner(int(s))[1:] == (m, i)

    def test_rank_one_without_noise(self):
        cap = remove_carrier(synth_capture(static_trajectory(), self.geom, self.clean))
        _, _, y = pair_reads(cap, 1)
        values = np.linalg.eigvalsh(estimate_covariance(y).matrix)
        assert values[0] < 1e-10 * values[1]

    def test_misdetection_floor(self):
        cfg = replace(self.clean, misdetect_rss_floor_db=-2.5)
        cap = synth_capture(static_trajectory(range_m=4.0), self.geom, cfg)
        # 20 log10(9 / 16) is about -5 dB
        assert not np.any(cap.detected)
        assert np.all(cap.iq == 0)

    def test_nlos_changes_reads(self):
        multipath = replace(self.clean, nlos_paths=(NlosPath(0.2, 25.0, 4.0),))
        a = synth_capture(static_trajectory(), self.geom, self.clean)
        b = synth_capture(static_trajectory(), self.geom, multipath)
        assert not np.allclose(a.iq, b.iq)

    def test_empty_trajectory(self):
        with raises(SimulationError):
            synth_capture(TagTrajectory(1, [], [], []), self.geom, self.clean)

    def test_non_positive_power(self):
        with raises(SimulationError):
            synth_capture(
                static_trajectory(), self.geom, replace(self.clean, transmit_power=0.0)
            )

    def test_outside_field_of_view(self):
        with raises(SimulationError):
            synth_capture(static_trajectory(azimuth=25.0), self.geom, self.clean)

    def test_strong_nlos_rejected(self):
        with raises(SimulationError):
            SimConfig(nlos_paths=(NlosPath(gain_ratio=1.0),))

    def test_config_dict(self):
        cfg = SimConfig(rng_seed=3)
        assert SimConfig.from_dict(cfg.to_dict()) == cfg


class TestRawStreams:
    @classmethod
    def setup_class(cls):
        cls.cap = IQCapture(
            slot=np.array([1, 2, 3, 4]),
            antenna=np.array([1, 1, 2, 2]),
            tag=np.array([1, 2, 1, 2]),
            iq=np.array([1 + 0j, 0 + 0j, 0 + 2j, 1 + 0j]),
            detected=np.array([True, False, True, True]),
            num_cycles=1,
        )
        cls.streams = iq_to_raw_streams(cls.cap)

    def test_unit_read(self):
        s = self.streams[(1, 1)]
        assert s.rss_db[0] == approx(0.0)
        assert s.phase_rad[0] == approx(0.0)

    def test_imaginary_read(self):
        s = self.streams[(1, 2)]
        assert s.rss_db[0] == approx(6.0206, abs=1e-4)
        assert s.phase_rad[0] == approx(np.pi / 2)

    def test_gap_propagates(self):
        s = self.streams[(2, 1)]
        assert not s.valid[0]
        assert np.isnan(s.rss_db[0])
        assert np.isnan(s.phase_rad[0])

    def test_empty_capture(self):
        empty = IQCapture(
            slot=np.array([], dtype=int),
            antenna=np.array([], dtype=int),
            tag=np.array([], dtype=int),
            iq=np.array([], dtype=complex),
            detected=np.array([], dtype=bool),
            num_cycles=0,
        )
        with raises(SimulationError):
            iq_to_raw_streams(empty)


class TestCaptureFile:
    def test_write_read(self, tmp_path):
        cap = synth_capture(static_trajectory(), ArrayGeometry(), SimConfig(rng_seed=9))
        path = tmp_path / "capture.jsonl"
        write_capture(path, cap, extra={"label": 4})
        back, header = read_capture(path)
        assert header["label"] == 4
        assert header["config"]["rng_seed"] == 9
        assert np.array_equal(back.iq, cap.iq)
        assert np.array_equal(back.detected, cap.detected)
        assert back.num_cycles == cap.num_cycles
