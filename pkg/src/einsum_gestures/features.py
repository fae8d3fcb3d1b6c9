#
# This file is part of einsum_gestures
# (c) Copyright 2026 by the einsum_gestures authors
# Licensed under the AGPL-3.0; see LICENSE.txt file.
#

"""
Statistical, correlation and wavelet feature bundles of signal frames
"""

from dataclasses import dataclass
from einsum_gestures.preprocess import FRAME_LENGTH, SignalFrame
import jsonlines
from logging import getLogger
import numpy as np
from pathlib import Path
import pywt
from scipy import stats

STAT_NAMES = (
    "mode",
    "median",
    "q1",
    "q3",
    "mean",
    "max",
    "min",
    "range",
    "variance",
    "std",
    "moment3",
    "kurtosis",
    "skewness",
    "entropy",
)
HISTOGRAM_BINS = 10
WAVELET = "db2"
TAG_ANTENNAS = ((1, 1), (1, 2), (2, 1), (2, 2))
KINDS = ("spr", "sa", "wa")
CARDINALITY = {"spr": 116, "sa": 29, "wa": 38}

logger = getLogger(__name__)


class FeatureError(ValueError):
    def __init__(self, msg):
        super().__init__(msg)


@dataclass(frozen=True, eq=False)
class FeatureVector:
    kind: str
    values: np.ndarray
    names: tuple
    label: int | None = None
    sample_id: str = ""

    def __post_init__(self):
        if len(self.values) != len(self.names):
            raise FeatureError(
                f"{len(self.values)} values but {len(self.names)} names in a {self.kind} vector."
            )
        if len(set(self.names)) != len(self.names):
            raise FeatureError(f"Duplicate feature names in a {self.kind} vector.")

    def __len__(self):
        return len(self.values)


def stat_features(x) -> np.ndarray:
    """The 14 statistics of one channel, in STAT_NAMES order."""
    x = np.asarray(x, dtype=float)
    if len(x) < 2:
        raise FeatureError(f"Statistics need at least 2 samples, got {len(x)}.")
    lo, hi = float(np.min(x)), float(np.max(x))
    median, q1, q3 = np.percentile(x, [50, 25, 75])
    mean = float(np.mean(x))
    if hi == lo:
        return np.array([lo, lo, lo, lo, lo, lo, lo, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0])
    counts, edges = np.histogram(x, bins=HISTOGRAM_BINS)
    k = int(np.argmax(counts))
    mode = 0.5 * (edges[k] + edges[k + 1])
    variance = float(np.var(x))
    return np.array(
        [
            mode,
            median,
            q1,
            q3,
            mean,
            hi,
            lo,
            hi - lo,
            variance,
            np.sqrt(variance),
            stats.moment(x, 3),
            stats.kurtosis(x, fisher=True, bias=True),
            stats.skew(x, bias=True),
            stats.entropy(counts),
        ]
    )


def pearson(x, y) -> float:
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise FeatureError(f"Pearson inputs differ in shape: {x.shape} vs {y.shape}.")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        logger.warning("Pearson correlation of a constant series is defined as 0.")
        return 0.0
    return float(np.clip(stats.pearsonr(x, y)[0], -1.0, 1.0))


def dwt_db2_approx(x) -> np.ndarray:
    """Single-level db2 approximation coefficients with symmetric extension."""
    x = np.asarray(x, dtype=float)
    approx, _ = pywt.dwt(x, WAVELET, mode="symmetric")
    return approx


def _require(frame: SignalFrame, names: list, kind: str):
    missing = [n for n in names if n not in frame.channels]
    if missing:
        raise FeatureError(f"Frame {frame.sample_id} lacks {kind} channels {missing}.")
    for n in names:
        if len(frame[n]) != FRAME_LENGTH:
            raise FeatureError(
                f"Frame {frame.sample_id} channel {n} has {len(frame[n])} samples, "
                f"expected {FRAME_LENGTH}."
            )


def _spr(frame):
    rss = [f"rss_t{t}_a{a}" for t, a in TAG_ANTENNAS]
    phase = [f"phase_t{t}_a{a}" for t, a in TAG_ANTENNAS]
    _require(frame, rss + phase, "SPR")
    values, names = list(), list()
    for channel in rss + phase:
        values.extend(stat_features(frame[channel]))
        names.extend(f"{channel}_{s}" for s in STAT_NAMES)
    for r, p in zip(rss, phase):
        values.append(pearson(frame[r], frame[p]))
        names.append(f"corr_{r}_{p}")
    return values, names


def _sa(frame):
    aoa = ["aoa_t1", "aoa_t2"]
    _require(frame, aoa, "SA")
    values, names = list(), list()
    for channel in aoa:
        values.extend(stat_features(frame[channel]))
        names.extend(f"{channel}_{s}" for s in STAT_NAMES)
    values.append(pearson(frame["aoa_t1"], frame["aoa_t2"]))
    names.append("corr_aoa_t1_aoa_t2")
    return values, names


def _wa(frame):
    aoa = ["aoa_t1", "aoa_t2"]
    _require(frame, aoa, "WA")
    values, names = list(), list()
    for channel in aoa:
        coefficients = dwt_db2_approx(frame[channel])
        values.extend(coefficients)
        names.extend(f"{channel}_{WAVELET}_{i:02d}" for i in range(len(coefficients)))
    return values, names


BUILDERS = {"spr": _spr, "sa": _sa, "wa": _wa}


def build_bundle(frame: SignalFrame, kind: str) -> FeatureVector:
    if not isinstance(kind, str):
        raise TypeError(f"Expected bundle kind as str, got {type(kind)}.")
    kind = kind.lower()
    if kind not in BUILDERS:
        raise FeatureError(f"Unknown feature bundle {kind!r}; expected one of {KINDS}.")
    values, names = BUILDERS[kind](frame)
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise FeatureError(f"Non-finite {kind} features in frame {frame.sample_id}.")
    return FeatureVector(
        kind=kind,
        values=values,
        names=tuple(names),
        label=frame.label,
        sample_id=frame.sample_id,
    )


def feature_names(kind: str) -> tuple:
    """Names of a bundle, in order, without computing one."""
    frame = SignalFrame(
        channels={
            **{f"rss_t{t}_a{a}": np.linspace(0, 1, FRAME_LENGTH) for t, a in TAG_ANTENNAS},
            **{f"phase_t{t}_a{a}": np.linspace(0, 1, FRAME_LENGTH) for t, a in TAG_ANTENNAS},
            "aoa_t1": np.linspace(0, 1, FRAME_LENGTH),
            "aoa_t2": np.linspace(1, 0, FRAME_LENGTH),
        }
    )
    return build_bundle(frame, kind).names


def write_features(path: Path, vectors: list):
    with jsonlines.open(path, mode="w") as writer:
        writer.write_all(
            {
                "kind": v.kind,
                "label": v.label,
                "sample_id": v.sample_id,
                "values": dict(zip(v.names, (float(x) for x in v.values))),
            }
            for v in vectors
        )


def read_features(path: Path) -> list:
    with jsonlines.open(path) as reader:
        return [
            FeatureVector(
                kind=r["kind"],
                values=np.array(list(r["values"].values()), dtype=float),
                names=tuple(r["values"].keys()),
                label=r["label"],
                sample_id=r["sample_id"],
            )
            for r in reader
        ]


def as_matrix(vectors: list) -> tuple:
    """(X, y) arrays from feature vectors of one kind; y holds the 1-based labels."""
    if not vectors:
        raise FeatureError("No feature vectors given.")
    names = vectors[0].names
    for v in vectors:
        if v.names != names:
            raise FeatureError(f"Feature vector {v.sample_id} has a different layout.")
    x = np.vstack([v.values for v in vectors])
    y = np.array([-1 if v.label is None else v.label for v in vectors], dtype=int)
    return x, y
