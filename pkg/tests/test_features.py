#
# This file is part of einsum_gestures
# (c) Copyright 2026 by the einsum_gestures authors
# Licensed under the AGPL-3.0; see LICENSE.txt file.
#

"""
Test the einsum_gestures.features module
"""

from einsum_gestures.features import (
    STAT_NAMES,
    FeatureError,
    as_matrix,
    build_bundle,
    dwt_db2_approx,
    feature_names,
    pearson,
    read_features,
    stat_features,
    write_features,
)
from einsum_gestures.preprocess import SignalFrame
import numpy as np
from pytest import approx, raises
import pywt


def brute_force_stats(x):
    n = len(x)
    s = sorted(x)
    mean = sum(x) / n
    m2 = sum((v - mean) ** 2 for v in x) / n
    m3 = sum((v - mean) ** 3 for v in x) / n
    m4 = sum((v - mean) ** 4 for v in x) / n

    def quantile(q):
        pos = q * (n - 1)
        lo = int(np.floor(pos))
        hi = min(lo + 1, n - 1)
        return s[lo] + (pos - lo) * (s[hi] - s[lo])

    width = (s[-1] - s[0]) / 10
    counts = [0] * 10
    for v in x:
        counts[min(int((v - s[0]) / width), 9)] += 1
    k = counts.index(max(counts))
    p = [c / n for c in counts if c]
    return [
        s[0] + (k + 0.5) * width,
        quantile(0.5),
        quantile(0.25),
        quantile(0.75),
        mean,
        s[-1],
        s[0],
        s[-1] - s[0],
        m2,
        m2**0.5,
        m3,
        m4 / m2**2 - 3,
        m3 / m2**1.5,
        -sum(q * np.log(q) for q in p),
    ]


def random_frame(seed=0, label=3):
    rng = np.random.default_rng(seed)
    channels = dict()
    for kind in ("rss", "phase"):
        for t, a in ((1, 1), (1, 2), (2, 1), (2, 2)):
            channels[f"{kind}_t{t}_a{a}"] = rng.random(35)
    channels["aoa_t1"] = rng.normal(-6, 2, 35)
    channels["aoa_t2"] = rng.normal(6, 2, 35)
    return SignalFrame(channels=channels, label=label, sample_id=f"s{seed}")


class TestStatFeatures:
    def test_count(self):
        assert len(STAT_NAMES) == 14
        assert len(stat_features(np.arange(35.0))) == 14

    def test_constant(self):
        out = stat_features(np.full(35, 2.5))
        assert list(out[:7]) == [2.5] * 7
        assert list(out[7:]) == [0.0] * 7

    def test_sequence(self):
        out = dict(zip(STAT_NAMES, stat_features(np.arange(1.0, 36.0))))
        assert out["mean"] == approx(18.0)
        assert out["median"] == approx(18.0)
        assert out["q1"] == approx(9.5)
        assert out["q3"] == approx(26.5)
        assert out["range"] == approx(34.0)

    def test_symmetry(self):
        x = np.random.default_rng(1).exponential(size=35)
        a = dict(zip(STAT_NAMES, stat_features(x)))
        b = dict(zip(STAT_NAMES, stat_features(-x)))
        assert b["skewness"] == approx(-a["skewness"])
        assert b["kurtosis"] == approx(a["kurtosis"])

    def test_brute_force(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            x = rng.normal(size=35) * rng.uniform(0.1, 10)
            ours = stat_features(x)
            theirs = brute_force_stats(list(x))
            for name, a, b in zip(STAT_NAMES, ours, theirs):
                assert a == approx(b, rel=1e-10, abs=1e-10), name


class TestPearson:
    @classmethod
    def setup_class(cls):
        rng = np.random.default_rng(3)
        cls.x = rng.normal(size=35)
        cls.y = 0.5 * cls.x + rng.normal(size=35)

    def test_self(self):
        assert pearson(self.x, self.x) == approx(1.0)

    def test_negated(self):
        assert pearson(self.x, -self.x) == approx(-1.0)

    def test_formula(self):
        dx, dy = self.x - self.x.mean(), self.y - self.y.mean()
        expected = np.sum(dx * dy) / np.sqrt(np.sum(dx**2) * np.sum(dy**2))
        assert pearson(self.x, self.y) == approx(expected, abs=1e-12)

    def test_constant(self):
        assert pearson(np.ones(35), self.x) == 0.0

    def test_shape_mismatch(self):
        with raises(FeatureError):
            pearson(self.x, self.x[:10])


class TestWavelet:
    def test_length(self):
        assert len(dwt_db2_approx(np.arange(35.0))) == 19

    def test_constant(self):
        assert np.allclose(dwt_db2_approx(np.full(35, 3.0)), 3.0 * np.sqrt(2), atol=1e-9)

    def test_convolution(self):
        x = np.random.default_rng(4).normal(size=35)
        dec_lo = np.array(pywt.Wavelet("db2").dec_lo)
        padded = np.pad(x, 3, mode="symmetric")
        full = np.convolve(padded, dec_lo)
        expected = np.array([full[2 * m + 4] for m in range(19)])
        assert np.allclose(dwt_db2_approx(x), expected, atol=1e-12)


class TestBundles:
    @classmethod
    def setup_class(cls):
        cls.frame = random_frame()

    def test_cardinalities(self):
        for seed in range(5):
            frame = random_frame(seed)
            assert len(build_bundle(frame, "spr")) == 116
            assert len(build_bundle(frame, "sa")) == 29
            assert len(build_bundle(frame, "wa")) == 38

    def test_stable_names(self):
        assert build_bundle(self.frame, "SPR").names == feature_names("spr")
        assert feature_names("spr")[0] == "rss_t1_a1_mode"
        assert feature_names("spr")[-1] == "corr_rss_t2_a2_phase_t2_a2"
        assert feature_names("sa")[-1] == "corr_aoa_t1_aoa_t2"
        assert feature_names("wa")[19] == "aoa_t2_db2_00"

    def test_label_carried(self):
        v = build_bundle(self.frame, "wa")
        assert v.label == 3
        assert v.sample_id == "s0"

    def test_missing_channels(self):
        partial = SignalFrame(channels={"aoa_t1": np.zeros(35)})
        with raises(FeatureError):
            build_bundle(partial, "sa")

    def test_unknown_kind(self):
        with raises(FeatureError):
            build_bundle(self.frame, "xyz")

    def test_kind_type(self):
        with raises(TypeError):
            build_bundle(self.frame, 1)

    def test_matrix(self):
        vectors = [build_bundle(random_frame(s, label=s + 1), "sa") for s in range(4)]
        x, y = as_matrix(vectors)
        assert x.shape == (4, 29)
        assert list(y) == [1, 2, 3, 4]

    def test_file(self, tmp_path):
        path = tmp_path / "sa.jsonl"
        vectors = [build_bundle(random_frame(s), "sa") for s in range(3)]
        write_features(path, vectors)
        back = read_features(path)
        assert [v.names for v in back] == [v.names for v in vectors]
        assert np.allclose(back[2].values, vectors[2].values)
