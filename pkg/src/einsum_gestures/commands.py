#
# This file is part of einsum_gestures
# (c) Copyright 2026 by the einsum_gestures authors
# Licensed under the AGPL-3.0; see LICENSE.txt file.
#

"""
Pipeline stages behind the command line: simulate, aoa, preprocess, features, train,
eval, fuse, cost and pipeline

Every stage reads and writes plain files in one workspace directory:

    manifest.jsonl          one record per simulated sample
    captures/<id>.jsonl     interleaved IQ reads
    tracks/<id>.jsonl       smoothed AoA tracks (and raw tracks with spectra on request)
    frames.jsonl            preprocessed 35-sample frames
    features/<kind>.jsonl   SPR, SA and WA feature vectors
    split.json              stratified train/test sample ids
    models/<kind>.json      trained circuits
    posteriors/<kind>.jsonl test-set posteriors
    reports/                evaluation report, metrics and confusion matrices
    cost/                   cost tables
"""

from concurrent.futures import ProcessPoolExecutor
from datetime import datetime
from einsum_gestures.aoa import (
    EstimationError,
    InsufficientReadsError,
    estimate_track,
    kalman_smooth,
    read_track,
    write_track,
)
from einsum_gestures.circuit import EinsumCircuit, build_circuit
from einsum_gestures.config import (
    ConfigError,
    adopt_dataset,
    array_geometry,
    circuit_spec,
    field_of_view,
    preprocess_params,
    sim_config,
    worker_count,
    write_config,
    write_provenance,
)
from einsum_gestures.cost import (
    check_published,
    cost_report,
    render_cost_report,
    write_cost_tables,
)
from einsum_gestures.features import (
    CARDINALITY,
    KINDS,
    as_matrix,
    build_bundle,
    read_features,
    write_features,
)
from einsum_gestures.fusion import (
    evaluate,
    fuse_predict,
    render_report,
    stratified_split,
    write_confusion,
)
from einsum_gestures.gestures import gesture, gesture_trajectory
from einsum_gestures.preprocess import (
    DegenerateSignalError,
    build_frame,
    read_frames,
    write_frames,
)
from einsum_gestures.simulation import (
    iq_to_raw_streams,
    read_capture,
    remove_carrier,
    synth_capture,
    write_capture,
)
from functools import partial
import json
import jsonlines
from logging import getLogger
import numpy as np
from pathlib import Path
import pytz

COMMANDS = ("simulate", "aoa", "preprocess", "features", "train", "eval", "fuse", "cost", "pipeline")
EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INVARIANT = 3
POSTERIOR_TOLERANCE = 1e-9

logger = getLogger(__name__)


class InvariantViolation(Exception):
    def __init__(self, msg):
        super().__init__(msg)


class DataError(ValueError):
    def __init__(self, msg):
        super().__init__(msg)


def _map(fn, items: list, config: dict) -> list:
    """Apply fn to items in order, in a process pool unless one worker is configured."""
    workers = worker_count(config)
    if workers == 1 or len(items) < 2:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def sample_id(class_id: int, index: int) -> str:
    return f"g{class_id:02d}_s{index:03d}"


def sample_seed(seed: int, class_id: int, index: int) -> int:
    return int(np.random.default_rng([seed, class_id, index]).integers(2**31 - 1))


def read_manifest(workspace: Path) -> list:
    path = Path(workspace) / "manifest.jsonl"
    if not path.exists():
        raise DataError(f"No dataset at {workspace}: {path.name} is missing.")
    with jsonlines.open(path) as reader:
        return list(reader)


# simulate


def _simulate_sample(job: dict, workspace: Path, config: dict) -> dict:
    trajectories = gesture_trajectory(job["label"], config["duration_s"], job["seed"])
    cap = synth_capture(trajectories, array_geometry(config), sim_config(config, job["seed"]))
    write_capture(
        workspace / job["capture"],
        cap,
        {"sample_id": job["sample_id"], "label": job["label"]},
    )
    return job


def cmd_simulate(config: dict, workspace: Path) -> list:
    """Synthesize samples_per_class captures of the first `classes` gestures."""
    if config["samples_per_class"] < 1:
        raise ConfigError("samples_per_class must be at least 1.")
    workspace = Path(workspace)
    (workspace / "captures").mkdir(parents=True, exist_ok=True)
    jobs = list()
    for class_id in range(1, config["classes"] + 1):
        g = gesture(class_id)
        for i in range(config["samples_per_class"]):
            sid = sample_id(class_id, i)
            jobs.append(
                {
                    "sample_id": sid,
                    "label": class_id,
                    "code": g.code,
                    "seed": sample_seed(config["seed"], class_id, i),
                    "capture": f"captures/{sid}.jsonl",
                }
            )
    records = _map(partial(_simulate_sample, workspace=workspace, config=config), jobs, config)
    with jsonlines.open(workspace / "manifest.jsonl", mode="w") as writer:
        writer.write_all(records)
    logger.info(f"Simulated {len(records)} captures into {workspace}")
    return records


# aoa


def _aoa_sample(record: dict, workspace: Path, config: dict) -> bool:
    cap, _ = read_capture(workspace / record["capture"])
    fov = field_of_view(config)
    raw, smoothed = dict(), dict()
    try:
        for tag in cap.tags:
            raw[tag] = estimate_track(
                cap,
                tag,
                fov,
                window=config["window"],
                hop=config["hop"],
                grid_step_deg=config["grid_step_deg"],
                min_pairs=config["min_pairs"],
                keep_spectra=config["keep_spectra"],
            )
            smoothed[tag] = kalman_smooth(
                raw[tag], config["process_noise"], config["measurement_noise"]
            )
    except (InsufficientReadsError, EstimationError) as err:
        logger.warning(f"Sample {record['sample_id']}: no AoA track ({err})")
        return False
    extra = {"sample_id": record["sample_id"], "label": record["label"]}
    write_track(workspace / "tracks" / f"{record['sample_id']}.jsonl", smoothed, extra)
    if config["keep_spectra"]:
        write_track(workspace / "tracks" / f"{record['sample_id']}.raw.jsonl", raw, extra)
    return True


def cmd_aoa(config: dict, workspace: Path) -> int:
    workspace = Path(workspace)
    records = read_manifest(workspace)
    (workspace / "tracks").mkdir(exist_ok=True)
    done = _map(partial(_aoa_sample, workspace=workspace, config=config), records, config)
    logger.info(f"Estimated AoA tracks for {sum(done)} of {len(records)} samples")
    return sum(done)


# preprocess


def _frame_sample(record: dict, workspace: Path, config: dict):
    track_path = workspace / "tracks" / f"{record['sample_id']}.jsonl"
    if not track_path.exists():
        logger.warning(f"Sample {record['sample_id']} has no AoA track; skipped.")
        return None
    cap, _ = read_capture(workspace / record["capture"])
    tracks, _ = read_track(track_path)
    try:
        return build_frame(
            iq_to_raw_streams(remove_carrier(cap)),
            tracks,
            label=record["label"],
            sample_id=record["sample_id"],
            params=preprocess_params(config),
        )
    except DegenerateSignalError as err:
        logger.warning(f"Sample {record['sample_id']} rejected: {err}")
        return None


def cmd_preprocess(config: dict, workspace: Path) -> list:
    workspace = Path(workspace)
    records = read_manifest(workspace)
    frames = _map(partial(_frame_sample, workspace=workspace, config=config), records, config)
    frames = [f for f in frames if f is not None]
    if not frames:
        raise DataError("Every sample was rejected during preprocessing.")
    write_frames(workspace / "frames.jsonl", frames)
    logger.info(f"Wrote {len(frames)} frames ({len(records) - len(frames)} rejected)")
    return frames


# features


def _bundles(frame) -> list:
    return [build_bundle(frame, kind) for kind in KINDS]


def cmd_features(config: dict, workspace: Path) -> dict:
    workspace = Path(workspace)
    path = workspace / "frames.jsonl"
    if not path.exists():
        raise DataError(f"{path} is missing; run preprocess first.")
    frames = read_frames(path)
    bundles = _map(_bundles, frames, config)
    (workspace / "features").mkdir(exist_ok=True)
    vectors = dict()
    for k, kind in enumerate(KINDS):
        vectors[kind] = [b[k] for b in bundles]
        for v in vectors[kind]:
            if len(v) != CARDINALITY[kind]:
                raise InvariantViolation(
                    f"{kind} vector of {v.sample_id} has {len(v)} features, "
                    f"expected {CARDINALITY[kind]}."
                )
        write_features(workspace / "features" / f"{kind}.jsonl", vectors[kind])
    return vectors


# train


def _load_features(workspace: Path, kind: str) -> list:
    path = Path(workspace) / "features" / f"{kind}.jsonl"
    if not path.exists():
        raise DataError(f"{path} is missing; run features first.")
    return read_features(path)


def _select(vectors: list, ids: list) -> list:
    by_id = {v.sample_id: v for v in vectors}
    missing = [i for i in ids if i not in by_id]
    if missing:
        raise DataError(f"Samples {missing[:5]} have no feature vectors.")
    return [by_id[i] for i in ids]


def cmd_train(config: dict, workspace: Path) -> dict:
    workspace = Path(workspace)
    vectors = {kind: _load_features(workspace, kind) for kind in KINDS}
    reference = vectors[KINDS[0]]
    labels = np.array([v.label for v in reference])
    if labels.min() < 1 or labels.max() > config["classes"]:
        raise DataError(
            f"Labels span {labels.min()}..{labels.max()}, outside the {config['classes']} "
            "classes of the configuration."
        )
    train, test = stratified_split(labels, config["test_fraction"], config["split_seed"])
    split = {
        "train": [reference[i].sample_id for i in train],
        "test": [reference[i].sample_id for i in test],
    }
    with open(workspace / "split.json", "w", encoding="utf-8") as f:
        json.dump(split, f, indent=1)

    (workspace / "models").mkdir(exist_ok=True)
    models = dict()
    for kind in KINDS:
        x, y = as_matrix(_select(vectors[kind], split["train"]))
        circuit = build_circuit(circuit_spec(config, kind, x.shape[1]))
        history = circuit.em_fit(
            x,
            y,
            epochs=config["epochs"],
            smoothing=config["smoothing"],
            variance_floor=config["variance_floor"],
        )
        drops = [
            e
            for e in range(1, len(history))
            if history[e] < history[e - 1] - 1e-6 * abs(history[e - 1])
        ]
        if drops:
            logger.warning(f"{kind}: training log-likelihood decreased at epochs {drops}")
        circuit.save(
            workspace / "models" / f"{kind}.json",
            {"kind": kind, "train_samples": len(y), "epochs": config["epochs"]},
        )
        models[kind] = circuit
        logger.info(f"Trained the {kind} circuit on {len(y)} samples")
    return models


# eval


def _load_split(workspace: Path) -> dict:
    path = Path(workspace) / "split.json"
    if not path.exists():
        raise DataError(f"{path} is missing; run train first.")
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def _write_posteriors(path: Path, vectors: list, posteriors: np.ndarray):
    with jsonlines.open(path, mode="w") as writer:
        writer.write_all(
            {"sample_id": v.sample_id, "label": v.label, "posterior": [float(p) for p in post]}
            for v, post in zip(vectors, posteriors)
        )


def _read_posteriors(path: Path) -> list:
    if not path.exists():
        raise DataError(f"{path} is missing; run eval first.")
    with jsonlines.open(path) as reader:
        return list(reader)


def cmd_eval(config: dict, workspace: Path) -> dict:
    """Test-set posteriors and metrics of each single-bundle model."""
    workspace = Path(workspace)
    split = _load_split(workspace)
    (workspace / "posteriors").mkdir(exist_ok=True)
    reports = dict()
    for kind in KINDS:
        path = workspace / "models" / f"{kind}.json"
        if not path.exists():
            raise DataError(f"{path} is missing; run train first.")
        circuit = EinsumCircuit.load(path)
        vectors = _select(_load_features(workspace, kind), split["test"])
        x, y = as_matrix(vectors)
        posteriors = np.atleast_2d(circuit.posterior(x))
        worst = float(np.max(np.abs(posteriors.sum(axis=1) - 1.0)))
        if worst > POSTERIOR_TOLERANCE:
            raise InvariantViolation(f"{kind} posteriors miss the simplex by {worst}.")
        _write_posteriors(workspace / "posteriors" / f"{kind}.jsonl", vectors, posteriors)
        reports[kind] = evaluate(y, np.argmax(posteriors, axis=1) + 1, circuit.spec.classes)
        logger.info(f"{kind}: accuracy {reports[kind].accuracy:.2f}%")
    return reports


# fuse


def _check_confusion(name: str, report):
    rows = report.normalized_confusion.sum(axis=1)
    support = report.confusion.sum(axis=1)
    if not np.allclose(rows[support > 0], 1.0):
        raise InvariantViolation(f"{name}: normalized confusion rows do not sum to 1.")
    if int(np.trace(report.confusion)) != round(report.accuracy * report.sample_count / 100):
        raise InvariantViolation(f"{name}: accuracy disagrees with the confusion matrix.")


def cmd_fuse(config: dict, workspace: Path) -> dict:
    """Fuse the per-model posteriors and write the evaluation report."""
    workspace = Path(workspace)
    rows = {kind: _read_posteriors(workspace / "posteriors" / f"{kind}.jsonl") for kind in KINDS}
    ids = [r["sample_id"] for r in rows[KINDS[0]]]
    for kind in KINDS:
        if [r["sample_id"] for r in rows[kind]] != ids:
            raise DataError(f"{kind} posteriors cover different samples.")
    labels = np.array([r["label"] for r in rows[KINDS[0]]], dtype=int)
    posteriors = {kind: np.array([r["posterior"] for r in rows[kind]]) for kind in KINDS}
    classes = posteriors[KINDS[0]].shape[1]

    reports = {
        kind: evaluate(labels, np.argmax(posteriors[kind], axis=1) + 1, classes) for kind in KINDS
    }
    fused = fuse_predict([posteriors[kind] for kind in KINDS], config["fusion"])
    reports["fused"] = evaluate(labels, fused, classes)

    out = workspace / "reports"
    out.mkdir(exist_ok=True)
    for name, report in reports.items():
        _check_confusion(name, report)
        write_confusion(out / f"confusion_{name}.csv", report)
        write_confusion(out / f"confusion_{name}_counts.csv", report, normalized=False)
    with open(out / "metrics.json", "w", encoding="utf-8") as f:
        json.dump({name: r.metrics() for name, r in reports.items()}, f, indent=1)
    render_report(reports).write(out, "evaluation")
    write_config(out, config)
    logger.info(f"Fused ({config['fusion']}) accuracy {reports['fused'].accuracy:.2f}%")
    return reports


# cost


def cmd_cost(config: dict, out: Path, check: bool = False):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    report = cost_report()
    write_cost_tables(out, report)
    render_cost_report(report).write(out, "cost")
    write_config(out, config)
    if check:
        mismatches = check_published(report)
        if mismatches:
            raise InvariantViolation(
                f"{len(mismatches)} cost figures differ from the published ones: "
                + "; ".join(mismatches)
            )
    return report


# pipeline


def cmd_pipeline(config: dict, workspace: Path) -> dict:
    """AoA, preprocessing, features, training, evaluation, fusion and cost on a dataset."""
    workspace = Path(workspace)
    read_manifest(workspace)
    cmd_aoa(config, workspace)
    cmd_preprocess(config, workspace)
    cmd_features(config, workspace)
    cmd_train(config, workspace)
    cmd_eval(config, workspace)
    reports = cmd_fuse(config, workspace)
    cmd_cost(config, workspace / "cost", check=True)
    return reports


def run_command(
    command: str,
    config: dict,
    workspace: Path | None = None,
    out: Path | None = None,
    check: bool = False,
) -> int:
    """Run one stage and map its outcome to an exit code."""
    started = datetime.now(tz=pytz.utc)
    if command not in COMMANDS:
        logger.error(f"Unknown command {command!r}; expected one of {', '.join(COMMANDS)}.")
        return EXIT_USAGE
    if command != "cost" and workspace is None:
        logger.error(f"Command {command!r} needs a dataset directory.")
        return EXIT_USAGE
    workspace = None if workspace is None else Path(workspace)
    if command == "cost":
        target = Path(out) if out else (workspace / "cost" if workspace else Path("cost"))
    else:
        target = workspace
    status = EXIT_OK
    try:
        if command == "cost":
            cmd_cost(config, target, check)
        else:
            if command == "simulate":
                cmd_simulate(config, workspace)
            else:
                config = adopt_dataset(config, workspace)
                {
                    "aoa": cmd_aoa,
                    "preprocess": cmd_preprocess,
                    "features": cmd_features,
                    "train": cmd_train,
                    "eval": cmd_eval,
                    "fuse": cmd_fuse,
                    "pipeline": cmd_pipeline,
                }[command](config, workspace)
            write_config(workspace, config)
    except ConfigError as err:
        logger.error(f"Configuration error: {err}")
        status = EXIT_USAGE
    except InvariantViolation as err:
        logger.error(f"Invariant violation: {err}")
        status = EXIT_INVARIANT
    except (ValueError, KeyError, OSError) as err:
        logger.error(f"Data error: {err}")
        status = EXIT_DATA
    if target is not None and target.is_dir():
        write_provenance(target, command, started, status)
    return status
