#
# This file is part of einsum_gestures
# (c) Copyright 2026 by the einsum_gestures authors
# Licensed under the AGPL-3.0; see LICENSE.txt file.
#

"""
Einsum Network over a random binary region graph, with class heads and EM training

Every non-root region holds K sum nodes. An internal region mixes the outer product
of its children's K-vectors through a K x K x K tensor (S_k = sum_ij W_kij U_i V_j);
a leaf region mixes L diagonal Gaussians over its scope. The root region of each
repetition produces one value per class and a C x R head layer mixes the
repetitions. All arithmetic is in log space.
"""

from dataclasses import asdict, dataclass, field
import json
from logging import getLogger
import numpy as np
from pathlib import Path
from scipy.special import logsumexp

LOG_2PI = float(np.log(2.0 * np.pi))
STD_FLOOR = 1e-6


class CircuitError(ValueError):
    def __init__(self, msg):
        super().__init__(msg)


class TrainingError(ValueError):
    def __init__(self, msg):
        super().__init__(msg)


@dataclass(frozen=True)
class CircuitSpec:
    depth: int
    sum_components: int
    leaf_distributions: int
    repetitions: int
    classes: int
    num_variables: int
    structure_seed: int = 0

    def __post_init__(self):
        for name in (
            "depth",
            "sum_components",
            "leaf_distributions",
            "repetitions",
            "classes",
            "num_variables",
        ):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise CircuitError(f"{name} must be a positive integer, got {value!r}.")


@dataclass(frozen=True)
class Region:
    scope: tuple  # 0-based variable indices
    depth: int
    children: tuple = ()  # node indices within the repetition

    @property
    def is_leaf(self) -> bool:
        return not self.children


@dataclass
class RegionGraph:
    num_variables: int
    depth: int
    seed: int
    repetitions: list = field(default_factory=list)  # per repetition, regions in BFS order
    missing: list = field(default_factory=list)  # per repetition, regions lost to early stops

    def leaves(self, r: int) -> list:
        return [i for i, region in enumerate(self.repetitions[r]) if region.is_leaf]

    def at_depth(self, r: int, d: int) -> list:
        return [region for region in self.repetitions[r] if region.depth == d]

    def to_dict(self) -> dict:
        return {
            "num_variables": self.num_variables,
            "depth": self.depth,
            "seed": self.seed,
            "missing": list(self.missing),
            "repetitions": [
                [
                    {"scope": list(g.scope), "depth": g.depth, "children": list(g.children)}
                    for g in regions
                ]
                for regions in self.repetitions
            ],
        }

    @classmethod
    def from_dict(cls, d: dict):
        return cls(
            num_variables=d["num_variables"],
            depth=d["depth"],
            seed=d["seed"],
            missing=list(d["missing"]),
            repetitions=[
                [Region(tuple(g["scope"]), g["depth"], tuple(g["children"])) for g in regions]
                for regions in d["repetitions"]
            ],
        )


def build_region_graph(num_variables: int, depth: int, repetitions: int, seed: int) -> RegionGraph:
    """
    Random balanced binary partitions of the variables, one per repetition.

    Each region is split uniformly at random into halves (the first half takes the extra
    variable) until the given depth. A single-variable region stops early; the regions
    its full subtree would have held are counted in `missing`.
    """
    if num_variables < 1:
        raise CircuitError(f"A region graph needs at least 1 variable, got {num_variables}.")
    if depth < 1 or repetitions < 1:
        raise CircuitError(f"Depth and repetitions must be positive, got {depth}, {repetitions}.")
    rng = np.random.default_rng(seed)
    graph = RegionGraph(num_variables=num_variables, depth=depth, seed=seed)
    for _ in range(repetitions):
        regions = [Region(tuple(range(num_variables)), 0)]
        missing = 0
        k = 0
        while k < len(regions):
            region = regions[k]
            n = len(region.scope)
            if region.depth < depth and n >= 2:
                perm = rng.permutation(region.scope)
                half = (n + 1) // 2
                first = len(regions)
                regions.append(Region(tuple(sorted(int(v) for v in perm[:half])), region.depth + 1))
                regions.append(Region(tuple(sorted(int(v) for v in perm[half:])), region.depth + 1))
                regions[k] = Region(region.scope, region.depth, (first, first + 1))
            elif region.depth < depth:
                missing += 2 ** (depth - region.depth + 1) - 2
            k += 1
        graph.repetitions.append(regions)
        graph.missing.append(missing)
    return graph


def _normalize_log(counts: np.ndarray, axes: tuple) -> np.ndarray:
    return np.log(counts) - np.log(np.sum(counts, axis=axes, keepdims=True))


def _einsum_log(log_w: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """log sum_ij W_kij exp(u_ni + v_nj), stabilized by the per-sample maxima."""
    mu = np.max(u, axis=1, keepdims=True)
    mv = np.max(v, axis=1, keepdims=True)
    s = np.einsum("kij,ni,nj->nk", np.exp(log_w), np.exp(u - mu), np.exp(v - mv))
    return np.log(s) + mu + mv


def _mix_log(log_w: np.ndarray, leaf: np.ndarray) -> np.ndarray:
    """log sum_l W_kl exp(leaf_nl)."""
    return logsumexp(log_w[None, :, :] + leaf[:, None, :], axis=2)


def bayes_posterior(log_lik: np.ndarray, priors=None) -> np.ndarray:
    """Normalized class posteriors from class log-likelihoods (last axis = classes)."""
    log_lik = np.asarray(log_lik, dtype=float)
    c = log_lik.shape[-1]
    if priors is None:
        log_prior = np.full(c, -np.log(c))
    else:
        priors = np.asarray(priors, dtype=float)
        if priors.shape != (c,) or np.any(priors < 0) or abs(priors.sum() - 1.0) > 1e-9:
            raise CircuitError(f"Priors must be a simplex over {c} classes.")
        with np.errstate(divide="ignore"):
            log_prior = np.log(priors)
    joint = log_lik + log_prior
    if np.any(np.all(np.isneginf(joint), axis=-1)):
        raise CircuitError("Every class has zero likelihood.")
    log_post = joint - logsumexp(joint, axis=-1, keepdims=True)
    post = np.exp(log_post)
    return post / np.sum(post, axis=-1, keepdims=True)


class EinsumCircuit:
    """
    Class-conditional Einsum Network

    Capabilities:
    - exact class log-likelihoods log p(x | c)
    - posteriors and argmax prediction
    - full-batch EM training
    - JSON save/load
    """

    def __init__(self, spec: CircuitSpec, graph: RegionGraph | None = None):
        self.logger = getLogger("EinsumCircuit")
        self.spec = spec
        self.graph = graph or build_region_graph(
            spec.num_variables, spec.depth, spec.repetitions, spec.structure_seed
        )
        if len(self.graph.repetitions) != spec.repetitions:
            raise CircuitError("Region graph and spec disagree on the number of repetitions.")
        self.feature_mean = np.zeros(spec.num_variables)
        self.feature_std = np.ones(spec.num_variables)
        self.log_weights = list()  # per repetition {node: log weights}
        self.means = list()  # per repetition {leaf node: (L, scope) standardized}
        self.variances = list()
        self.log_heads = np.zeros((spec.classes, spec.repetitions))
        self.train_loglik = list()
        self.last_contractions = list()
        self._init_parameters(np.random.default_rng([spec.structure_seed, 1]))

    def _weight_shape(self, node: int, region: Region) -> tuple:
        k, l, c = self.spec.sum_components, self.spec.leaf_distributions, self.spec.classes
        outputs = c if node == 0 else k
        return (outputs, l) if region.is_leaf else (outputs, k, k)

    def _init_parameters(self, rng):
        l = self.spec.leaf_distributions
        self.log_weights, self.means, self.variances = list(), list(), list()
        for regions in self.graph.repetitions:
            weights, means, variances = dict(), dict(), dict()
            for node, region in enumerate(regions):
                shape = self._weight_shape(node, region)
                w = rng.uniform(0.5, 1.5, size=shape)
                weights[node] = _normalize_log(w, tuple(range(1, len(shape))))
                if region.is_leaf:
                    means[node] = rng.normal(0.0, 1.0, size=(l, len(region.scope)))
                    variances[node] = np.ones((l, len(region.scope)))
            self.log_weights.append(weights)
            self.means.append(means)
            self.variances.append(variances)
        h = rng.uniform(0.5, 1.5, size=(self.spec.classes, self.spec.repetitions))
        self.log_heads = _normalize_log(h, (1,))

    # inference

    def _check_input(self, x) -> tuple:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        if x.shape[1] != self.spec.num_variables:
            raise CircuitError(
                f"Expected {self.spec.num_variables} features, got {x.shape[1]}."
            )
        if not np.all(np.isfinite(x)):
            raise CircuitError("Input holds non-finite values.")
        return x, single

    def _standardize(self, x: np.ndarray) -> np.ndarray:
        return (x - self.feature_mean) / self.feature_std

    def _leaf_loglik(self, r: int, node: int, z: np.ndarray) -> np.ndarray:
        scope = list(self.graph.repetitions[r][node].scope)
        mu, var = self.means[r][node], self.variances[r][node]
        diff = z[:, None, scope] - mu[None, :, :]
        return -0.5 * np.sum(LOG_2PI + np.log(var)[None] + diff**2 / var[None], axis=2)

    def _forward_rep(self, r: int, z: np.ndarray) -> tuple:
        """Log outputs per node (root: N x C) and leaf densities per leaf node (N x L)."""
        regions = self.graph.repetitions[r]
        outputs, leaves = dict(), dict()
        contractions = 0
        for node in reversed(range(len(regions))):
            region = regions[node]
            log_w = self.log_weights[r][node]
            if region.is_leaf:
                leaves[node] = self._leaf_loglik(r, node, z)
                outputs[node] = _mix_log(log_w, leaves[node])
            else:
                left, right = region.children
                outputs[node] = _einsum_log(log_w, outputs[left], outputs[right])
            if node != 0:
                contractions += 1
        self.last_contractions.append(contractions)
        return outputs, leaves

    def _class_loglik_std(self, z: np.ndarray) -> tuple:
        self.last_contractions = list()
        passes = [self._forward_rep(r, z) for r in range(self.spec.repetitions)]
        roots = np.stack([outputs[0] for outputs, _ in passes], axis=2)  # N x C x R
        loglik = logsumexp(roots + self.log_heads[None, :, :], axis=2)
        return loglik, passes

    @property
    def log_jacobian(self) -> float:
        return -float(np.sum(np.log(self.feature_std)))

    def forward_class_loglik(self, x) -> np.ndarray:
        """log p(x | c) for every class; shape (C,) for one sample, (N, C) for a batch."""
        x, single = self._check_input(x)
        loglik, _ = self._class_loglik_std(self._standardize(x))
        loglik = loglik + self.log_jacobian
        return loglik[0] if single else loglik

    def posterior(self, x, priors=None) -> np.ndarray:
        return bayes_posterior(self.forward_class_loglik(x), priors)

    def predict(self, x):
        """1-based class of maximum posterior (uniform priors); ties go to the lower class."""
        post = self.posterior(x)
        if post.ndim == 1:
            return int(np.argmax(post)) + 1
        return np.argmax(post, axis=1) + 1

    def einsum_contractions(self) -> list:
        """Sum layers evaluated per forward pass, per repetition."""
        return [len(regions) - 1 for regions in self.graph.repetitions]

    def leaf_moments(self) -> list:
        """Per repetition {leaf node: (means, variances)} in raw feature units."""
        moments = list()
        for r, regions in enumerate(self.graph.repetitions):
            d = dict()
            for node in self.means[r]:
                scope = list(regions[node].scope)
                s, m = self.feature_std[scope], self.feature_mean[scope]
                d[node] = (self.means[r][node] * s + m, self.variances[r][node] * s**2)
            moments.append(d)
        return moments

    # training

    def _init_from_data(self, z: np.ndarray, labels: np.ndarray, rng, variance_floor: float):
        c = self.spec.classes
        class_means = np.stack([z[labels == k].mean(axis=0) for k in range(c)])
        class_vars = np.stack([z[labels == k].var(axis=0) for k in range(c)])
        for r, regions in enumerate(self.graph.repetitions):
            for node in self.means[r]:
                scope = list(regions[node].scope)
                offset = int(rng.integers(c))
                for l in range(self.spec.leaf_distributions):
                    k = (l + offset) % c
                    self.means[r][node][l] = class_means[k, scope] + rng.normal(
                        0.0, 0.1, size=len(scope)
                    )
                    v = class_vars[k, scope]
                    self.variances[r][node][l] = np.where(v > variance_floor, v, 1.0)

    def em_fit(
        self,
        x,
        labels,
        epochs: int = 30,
        smoothing: float = 0.01,
        variance_floor: float = 1e-3,
        initialize: bool = True,
    ) -> list:
        """
        Full-batch EM on the class-conditional likelihood.

        Labels are 1-based classes. Returns the per-epoch training log-likelihood (summed
        over samples, raw feature units) of the parameters entering each epoch.
        """
        x, _ = self._check_input(x)
        labels = np.asarray(labels, dtype=int)
        if len(labels) != len(x):
            raise TrainingError(f"{len(x)} samples but {len(labels)} labels.")
        c = self.spec.classes
        if np.any(labels < 1) or np.any(labels > c):
            raise TrainingError(f"Labels must lie in 1..{c}.")
        support = np.bincount(labels - 1, minlength=c)
        if np.any(support == 0):
            empty = [int(k) + 1 for k in np.flatnonzero(support == 0)]
            raise TrainingError(f"Classes {empty} have no training samples.")
        if smoothing < 0 or variance_floor <= 0:
            raise TrainingError("Smoothing must be >= 0 and the variance floor positive.")

        y = labels - 1
        if initialize:
            self.feature_mean = x.mean(axis=0)
            self.feature_std = np.maximum(x.std(axis=0), STD_FLOOR)
            self._init_from_data(
                self._standardize(x), y, np.random.default_rng([self.spec.structure_seed, 2]), variance_floor
            )
        z = self._standardize(x)
        history = list()
        for epoch in range(epochs):
            ll = self._em_step(z, y, smoothing, variance_floor)
            history.append(ll + len(x) * self.log_jacobian)
            self.logger.debug(f"epoch {epoch + 1}/{epochs}: train log-likelihood {history[-1]:.6f}")
        self.train_loglik = list(self.train_loglik) + history
        if history:
            self.logger.info(
                f"EM finished after {epochs} epochs; log-likelihood {history[0]:.3f} -> {history[-1]:.3f}"
            )
        return history

    def _em_step(self, z, y, smoothing, variance_floor) -> float:
        n = len(z)
        rows = np.arange(n)
        loglik_all, passes = self._class_loglik_std(z)
        loglik = loglik_all[rows, y]
        if not np.all(np.isfinite(loglik)):
            raise TrainingError("Non-finite log-likelihood during the E-step.")

        # head responsibilities, N x R
        roots = np.stack([outputs[0][rows, y] for outputs, _ in passes], axis=1)
        rep_flow = np.exp(self.log_heads[y] + roots - loglik[:, None])
        head_counts = np.zeros_like(self.log_heads)
        np.add.at(head_counts, y, rep_flow)

        new_weights, new_means, new_vars = list(), list(), list()
        with np.errstate(divide="ignore"):
            for r, (outputs, leaves) in enumerate(passes):
                w, m, v = self._em_rep(
                    r, z, y, outputs, leaves, rep_flow[:, r], roots[:, r], smoothing, variance_floor
                )
                new_weights.append(w)
                new_means.append(m)
                new_vars.append(v)
        if not np.all(np.isfinite(head_counts)):
            raise TrainingError("NaN statistics in the class heads.")
        self.log_heads = _normalize_log(head_counts + smoothing, (1,))
        self.log_weights, self.means, self.variances = new_weights, new_means, new_vars
        return float(np.sum(loglik))

    def _em_rep(self, r, z, y, outputs, leaves, rep_flow, root_out, smoothing, variance_floor):
        regions = self.graph.repetitions[r]
        log_w = self.log_weights[r]
        weights, means, variances = dict(), dict(), dict()
        flows = {0: np.log(rep_flow)[:, None]}  # log flow into each output of a node
        for node, region in enumerate(regions):
            # the root mixes with the weight row of each sample's class
            lw = log_w[node][y] if node == 0 else log_w[node][None]
            out = root_out[:, None] if node == 0 else outputs[node]
            flow = flows[node]
            if region.is_leaf:
                leaf = leaves[node]
                if node == 0:
                    log_tau = flow + lw + leaf - out  # N x L
                    tau = np.exp(log_tau)
                    counts = np.zeros_like(log_w[node])
                    np.add.at(counts, y, tau)
                    gamma = tau
                else:
                    log_tau = flow[:, :, None] + lw + leaf[:, None, :] - out[:, :, None]
                    tau = np.exp(log_tau)  # N x K x L
                    counts = tau.sum(axis=0)
                    gamma = tau.sum(axis=1)
                if not np.all(np.isfinite(counts)):
                    raise TrainingError(f"NaN statistics at leaf region {node} of repetition {r}.")
                weights[node] = _normalize_log(counts + smoothing, (1,))
                means[node], variances[node] = self._gaussian_update(
                    r, node, z, gamma, variance_floor
                )
            else:
                left, right = region.children
                u, v = outputs[left], outputs[right]
                if node == 0:
                    log_tau = flow[:, :, None] + lw + u[:, :, None] + v[:, None, :] - out[:, :, None]
                    tau = np.exp(log_tau)  # N x K x K
                    counts = np.zeros_like(log_w[node])
                    np.add.at(counts, y, tau)
                    pair = tau
                else:
                    log_tau = (
                        flow[:, :, None, None]
                        + lw
                        + u[:, None, :, None]
                        + v[:, None, None, :]
                        - out[:, :, None, None]
                    )
                    tau = np.exp(log_tau)  # N x K x K x K
                    counts = tau.sum(axis=0)
                    pair = tau.sum(axis=1)
                if not np.all(np.isfinite(counts)):
                    raise TrainingError(f"NaN statistics at region {node} of repetition {r}.")
                weights[node] = _normalize_log(counts + smoothing, (1, 2))
                flows[left] = np.log(pair.sum(axis=2))
                flows[right] = np.log(pair.sum(axis=1))
        return weights, means, variances

    def _gaussian_update(self, r, node, z, gamma, variance_floor) -> tuple:
        scope = list(self.graph.repetitions[r][node].scope)
        zs = z[:, scope]  # N x s
        total = gamma.sum(axis=0)  # L
        mu = self.means[r][node].copy()
        var = self.variances[r][node].copy()
        live = total > 1e-12
        if np.any(live):
            g = gamma[:, live]
            mu[live] = (g.T @ zs) / total[live, None]
            second = (g.T @ zs**2) / total[live, None]
            var[live] = np.maximum(second - mu[live] ** 2, variance_floor)
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(var))):
            raise TrainingError(f"NaN leaf statistics at region {node} of repetition {r}.")
        return mu, var

    # persistence

    def to_dict(self) -> dict:
        return {
            "spec": asdict(self.spec),
            "region_graph": self.graph.to_dict(),
            "standardization": {
                "mean": self.feature_mean.tolist(),
                "std": self.feature_std.tolist(),
            },
            "log_heads": self.log_heads.tolist(),
            "repetitions": [
                {
                    "log_weights": {str(k): w.tolist() for k, w in self.log_weights[r].items()},
                    "means": {str(k): m.tolist() for k, m in self.means[r].items()},
                    "variances": {str(k): v.tolist() for k, v in self.variances[r].items()},
                }
                for r in range(self.spec.repetitions)
            ],
            "training": {"log_likelihood": [float(v) for v in self.train_loglik]},
        }

    @classmethod
    def from_dict(cls, d: dict):
        circuit = cls(CircuitSpec(**d["spec"]), RegionGraph.from_dict(d["region_graph"]))
        circuit.feature_mean = np.array(d["standardization"]["mean"], dtype=float)
        circuit.feature_std = np.array(d["standardization"]["std"], dtype=float)
        circuit.log_heads = np.array(d["log_heads"], dtype=float)
        circuit.log_weights, circuit.means, circuit.variances = list(), list(), list()
        for rep in d["repetitions"]:
            circuit.log_weights.append(
                {int(k): np.array(w, dtype=float) for k, w in rep["log_weights"].items()}
            )
            circuit.means.append({int(k): np.array(m, dtype=float) for k, m in rep["means"].items()})
            circuit.variances.append(
                {int(k): np.array(v, dtype=float) for k, v in rep["variances"].items()}
            )
        circuit.train_loglik = list(d.get("training", dict()).get("log_likelihood", []))
        return circuit

    def save(self, path: Path, metadata: dict = dict()):
        d = self.to_dict()
        d["training"].update(metadata)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(d, f, indent=1)

    @classmethod
    def load(cls, path: Path):
        with open(path, "r", encoding="utf-8") as f:
            d = json.load(f)
        return cls.from_dict(d)


def build_circuit(spec: CircuitSpec) -> EinsumCircuit:
    return EinsumCircuit(spec)
