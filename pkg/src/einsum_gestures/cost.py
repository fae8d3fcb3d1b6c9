#
# This file is part of einsum_gestures
# (c) Copyright 2026 by the einsum_gestures authors
# Licensed under the AGPL-3.0; see LICENSE.txt file.
#

"""
Closed-form MAC accounting for the gesture models and their baselines
"""

import csv
from dataclasses import dataclass, field
from einsum_gestures.features import STAT_NAMES
from einsum_gestures.preprocess import FRAME_LENGTH
from einsum_gestures.report import Report, markdown_table
from logging import getLogger
from math import log10
from pathlib import Path

DB2_FILTER_LENGTH = 4
DNN_TOLERANCE = 0.03
EFFICIENCY_TOLERANCE = 0.05

logger = getLogger(__name__)


class CostError(ValueError):
    def __init__(self, msg):
        super().__init__(msg)


def _positive(**kwargs):
    for name, value in kwargs.items():
        if not isinstance(value, int) or isinstance(value, bool) or value < 1:
            raise CostError(f"{name} must be a positive integer, got {value!r}.")


def mac_conv(
    d_o: int, h_o: int, w_o: int, c_o: int, c_i: int, k_d: int, k_h: int, k_w: int, count: int = 1
) -> int:
    """MACs of count identical convolutions; unused dimensions of 1D/2D layers are 1."""
    _positive(
        d_o=d_o, h_o=h_o, w_o=w_o, c_o=c_o, c_i=c_i, k_d=k_d, k_h=k_h, k_w=k_w, count=count
    )
    return count * d_o * h_o * w_o * c_o * c_i * k_d * k_h * k_w


def mac_conv2d(h_o: int, w_o: int, c_o: int, c_i: int, k_h: int, k_w: int, count: int = 1) -> int:
    return mac_conv(1, h_o, w_o, c_o, c_i, 1, k_h, k_w, count)


def mac_fc(n_i: int, n_o: int, count: int = 1) -> int:
    _positive(n_i=n_i, n_o=n_o, count=count)
    return count * n_i * n_o


def mac_mlp(layers) -> int:
    """Sum of N_l * N_(l+1) over consecutive layer widths."""
    layers = list(layers)
    if len(layers) < 2:
        raise CostError(f"An MLP needs at least two layer widths, got {layers}.")
    return sum(mac_fc(a, b) for a, b in zip(layers, layers[1:]))


def mac_einsum_model(depth: int, k: int, repetitions: int, classes: int) -> tuple:
    """
    (einsum, leaf, mix, total) MACs of one Einsum Network.

    Each of the 2^(D+1) - 2 einsum layers per repetition costs K^3 + K. The leaf term
    counts two operations (one subtraction, one multiplication) for each of the 2^D leaf
    inputs, which is what the published per-model totals add up to.
    """
    _positive(depth=depth, k=k, repetitions=repetitions, classes=classes)
    einsum = (2 ** (depth + 1) - 2) * repetitions * (k**3 + k)
    leaf = 2 * 2**depth
    mix = repetitions * classes
    return einsum, leaf, mix, einsum + leaf + mix


def mac_random_forest(n_estimators: int, max_depth: int, classes: int) -> dict:
    """MAC-equivalent operations of one forest; every arithmetic or comparison step is one."""
    _positive(n_estimators=n_estimators, max_depth=max_depth, classes=classes)
    items = {
        "node traversal": 2 * n_estimators * max_depth,
        "leaf normalization": n_estimators * (2 * classes - 1),
        "aggregation": n_estimators * classes + classes,
        "argmax": classes - 1,
    }
    items["total"] = sum(items.values())
    return items


def stat_ops(channels: int, samples: int = FRAME_LENGTH, statistics: int = len(STAT_NAMES)) -> int:
    _positive(channels=channels, samples=samples, statistics=statistics)
    return channels * samples * statistics


def feature_extraction_ops(kind: str) -> int:
    if not isinstance(kind, str):
        raise TypeError(f"Expected bundle kind as str, got {type(kind)}.")
    kind = kind.lower()
    if kind == "spr":
        return stat_ops(8) + 4 * FRAME_LENGTH
    elif kind == "sa":
        return stat_ops(2) + FRAME_LENGTH
    elif kind == "wa":
        return stat_ops(2, statistics=DB2_FILTER_LENGTH)
    raise CostError(f"Unknown feature bundle {kind!r}.")


def efficiency_score(accuracy_percent: float, macs: int) -> float:
    """Accuracy divided by log10 of the model MACs."""
    if macs <= 1:
        raise CostError(f"Efficiency needs more than one MAC, got {macs}.")
    return accuracy_percent / log10(macs)


# Layer tables: (kind, parameters, count). conv3d parameters are
# (D_o, H_o, W_o, C_o, C_i, K_D, K_H, K_W), conv2d (H_o, W_o, C_o, C_i, K_H, K_W), fc (N_i, N_o).
DNN_LAYERS = {
    "Early Fusion": [
        ("conv3d", (2, 5, 35, 64, 1, 5, 5, 5), 1),
        ("conv3d", (2, 5, 35, 64, 64, 5, 5, 5), 8),
        ("fc", (64, 21), 1),
    ],
    "Late Fusion": [
        ("conv2d", (2, 2, 64, 35, 5, 5), 2),
        ("conv2d", (2, 1, 64, 35, 5, 5), 1),
        ("conv2d", (2, 2, 64, 64, 5, 5), 2),
        ("conv2d", (2, 1, 64, 64, 5, 5), 1),
        ("conv2d", (1, 1, 64, 64, 5, 5), 3),
        ("fc", (192, 64), 1),
        ("fc", (64, 21), 1),
    ],
    "EUIGR": [
        ("conv2d", (2, 2, 64, 35, 5, 5), 4),
        ("conv2d", (2, 1, 64, 35, 5, 5), 2),
        ("conv2d", (2, 2, 64, 64, 5, 5), 4),
        ("conv2d", (2, 1, 64, 64, 5, 5), 2),
        ("conv2d", (1, 1, 64, 64, 5, 5), 6),
        ("fc", (192, 64), 2),
        ("fc", (64, 21), 1),
        ("fc", (64, 9), 1),
    ],
}
LAYER_COST = {"conv3d": mac_conv, "conv2d": mac_conv2d, "fc": mac_fc}

EINSUM_MODELS = {"spr": (6, 2, 10, 10, 21), "sa": (4, 2, 10, 10, 21), "wa": (5, 2, 10, 10, 21)}
MLP_MODELS = {"spr": (116, 128, 21), "sa": (29, 32, 21), "wa": (38, 128, 21)}
FOREST = (100, 10, 21)

PUBLISHED_ACCURACY = {
    "Early Fusion DNN": 96.94,
    "Late Fusion DNN": 95.92,
    "EUIGR DNN": 95.41,
    "Merged Einsum Networks": 97.96,
    "Merged MLPs": 96.24,
    "Merged Random Forests": 98.34,
}
PUBLISHED_TOTALS = {
    "einsum": {"spr": 12938, "sa": 3242, "wa": 6474, "total": 22654},
    "einsum_terms": {"einsum": 21800, "leaf": 224, "mix": 630},
    "forest": {"per forest": 8241, "total": 24723},
    "mlp": {"spr": 17536, "sa": 1600, "wa": 7552, "total": 26688},
    "features": {"spr": 4060, "sa": 1015, "wa": 280, "total": 5355},
    "dnn": {"Early Fusion": 1.4e9, "Late Fusion": 1.9e6, "EUIGR": 3.8e6},
    "efficiency": {"Merged Einsum Networks": 22.5, "Merged Random Forests": 22.4},
}


def mac_dnn(layers: list) -> list:
    """Line items (kind, parameters, count, MACs) of one layer table."""
    items = list()
    for kind, params, count in layers:
        if kind not in LAYER_COST:
            raise CostError(f"Unknown layer type {kind!r}.")
        items.append((kind, params, count, LAYER_COST[kind](*params, count=count)))
    return items


@dataclass
class LineItem:
    model: str
    component: str
    formula: str
    ops: int


@dataclass
class CostReport:
    items: list = field(default_factory=list)
    totals: dict = field(default_factory=dict)
    efficiency: dict = field(default_factory=dict)

    def add(self, model: str, component: str, formula: str, ops: int):
        if not isinstance(ops, int) or ops < 0:
            raise CostError(f"{model}/{component}: ops must be a non-negative integer.")
        self.items.append(LineItem(model, component, formula, ops))
        self.totals[model] = self.totals.get(model, 0) + ops

    def model_items(self, model: str) -> list:
        return [i for i in self.items if i.model == model]

    def check_additivity(self) -> list:
        return [
            model
            for model, total in self.totals.items()
            if self.model_items(model) and total != sum(i.ops for i in self.model_items(model))
        ]


def cost_report() -> CostReport:
    report = CostReport()
    for kind, (d, k, _, r, c) in EINSUM_MODELS.items():
        einsum, leaf, mix, _ = mac_einsum_model(d, k, r, c)
        model = f"Einsum {kind.upper()}"
        report.add(model, "einsum", f"(2^{d + 1}-2)*{r}*({k}^3+{k})", einsum)
        report.add(model, "leaf", f"2*2^{d}", leaf)
        report.add(model, "mix", f"{r}*{c}", mix)
    forest = mac_random_forest(*FOREST)
    for kind in EINSUM_MODELS:
        model = f"Random Forest {kind.upper()}"
        for component, ops in forest.items():
            if component != "total":
                report.add(model, component, f"forest{FOREST}", ops)
    for kind, layers in MLP_MODELS.items():
        model = f"MLP {kind.upper()}"
        for a, b in zip(layers, layers[1:]):
            report.add(model, f"fc {a}x{b}", f"{a}*{b}", mac_fc(a, b))
    for kind in EINSUM_MODELS:
        report.add("Feature extraction", kind.upper(), _feature_formula(kind), feature_extraction_ops(kind))
    for name, layers in DNN_LAYERS.items():
        for kind, params, count, ops in mac_dnn(layers):
            report.add(f"{name} DNN", kind, f"{count}x{params}", ops)

    merged = {
        "Merged Einsum Networks": _sum_models(report, "Einsum"),
        "Merged MLPs": _sum_models(report, "MLP"),
        "Merged Random Forests": _sum_models(report, "Random Forest"),
    }
    report.totals.update(merged)
    for name, accuracy in PUBLISHED_ACCURACY.items():
        report.efficiency[name] = efficiency_score(accuracy, report.totals[name])
    return report


def _feature_formula(kind: str) -> str:
    return {
        "spr": f"8*{FRAME_LENGTH}*{len(STAT_NAMES)}+4*{FRAME_LENGTH}",
        "sa": f"2*{FRAME_LENGTH}*{len(STAT_NAMES)}+{FRAME_LENGTH}",
        "wa": f"2*{FRAME_LENGTH}*{DB2_FILTER_LENGTH}",
    }[kind]


def _sum_models(report: CostReport, prefix: str) -> int:
    return sum(v for k, v in report.totals.items() if k.startswith(prefix + " "))


def check_published(report: CostReport | None = None) -> list:
    """Mismatches between computed and published cost figures; empty when all agree."""
    report = report or cost_report()
    t = report.totals
    mismatches = list()

    def exact(label, got, want):
        if got != want:
            mismatches.append(f"{label}: computed {got}, published {want}")

    def close(label, got, want, tolerance):
        if abs(got - want) > tolerance:
            mismatches.append(f"{label}: computed {got:.4g}, published {want:.4g}")

    published = PUBLISHED_TOTALS
    for kind in EINSUM_MODELS:
        exact(f"einsum {kind}", t[f"Einsum {kind.upper()}"], published["einsum"][kind])
        exact(f"mlp {kind}", t[f"MLP {kind.upper()}"], published["mlp"][kind])
        exact(f"features {kind}", feature_extraction_ops(kind), published["features"][kind])
        exact(f"forest {kind}", t[f"Random Forest {kind.upper()}"], published["forest"]["per forest"])
    exact("einsum total", t["Merged Einsum Networks"], published["einsum"]["total"])
    for term, want in published["einsum_terms"].items():
        got = sum(i.ops for i in report.items if i.model.startswith("Einsum ") and i.component == term)
        exact(f"einsum {term} total", got, want)
    exact("mlp total", t["Merged MLPs"], published["mlp"]["total"])
    exact("forest total", t["Merged Random Forests"], published["forest"]["total"])
    exact("features total", t["Feature extraction"], published["features"]["total"])
    for name, want in published["dnn"].items():
        got = t[f"{name} DNN"]
        if abs(got - want) > DNN_TOLERANCE * want:
            mismatches.append(f"{name}: computed {got}, published {want:.2g}")
    for name, want in published["efficiency"].items():
        close(f"efficiency {name}", report.efficiency[name], want, EFFICIENCY_TOLERANCE)
    for model in report.check_additivity():
        mismatches.append(f"{model}: total differs from the sum of its line items")
    for m in mismatches:
        logger.error(m)
    return mismatches


def render_cost_report(report: CostReport) -> Report:
    rows = [
        [name, f"{PUBLISHED_ACCURACY[name]:.2f}", f"{report.totals[name]:,}", f"{score:.2f}"]
        for name, score in report.efficiency.items()
    ]
    comparison = markdown_table(["Model", "Accuracy (%)", "MACs", "Efficiency"], rows)
    items = markdown_table(
        ["Model", "Component", "Formula", "Ops"],
        [[i.model, i.component, i.formula.replace("|", "/"), f"{i.ops:,}"] for i in report.items],
    )
    einsum = report.totals["Merged Einsum Networks"]
    extraction = report.totals["Feature extraction"]
    summary = (
        f"Merged Einsum Networks need {einsum:,} MACs per sample plus {extraction:,} "
        f"feature extraction operations."
    )
    return Report(
        title="Computational cost",
        summary=summary,
        markdown="\n\n".join(
            ["# Computational cost", summary, "## Models", comparison, "## Line items", items]
        ),
    )


def write_cost_tables(directory: Path, report: CostReport):
    """items.csv (every line item) and models.csv (totals and efficiency scores)."""
    directory = Path(directory)
    with open(directory / "items.csv", "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["model", "component", "formula", "ops"])
        for i in report.items:
            writer.writerow([i.model, i.component, i.formula, i.ops])
    with open(directory / "models.csv", "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["model", "macs", "accuracy", "efficiency"])
        for name, total in report.totals.items():
            score = report.efficiency.get(name)
            writer.writerow(
                [
                    name,
                    total,
                    "" if score is None else PUBLISHED_ACCURACY[name],
                    "" if score is None else f"{score:.4f}",
                ]
            )
