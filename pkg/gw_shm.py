#!/usr/bin/env python3
"""
gw-shm command line.

    synth    generate clean records (and noisy copies with --augment)
    features 16 features per record against per-path baselines
    train    fit scaler, autoencoder and mu + sigma threshold on baseline rows
    eval     per-case accuracy / F1 report and error distributions
    export   write the edge image of a trained detector
    infer    classify one record or features row with an edge image
    serve    run the HTTP inference service

Exit codes: 0 ok / healthy, 2 config or I/O error, 3 damaged, 4 bad image.
"""

import argparse
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

import dataset_store as store
from augment import augment_dataset, normalize
from autoencoder import build_model, random_search, split_indices, summary, train
from detector import EvalCase, build_detector, evaluate, save_error_histogram
from edge_runtime import DAMAGED, InferenceScratch, benchmark_latency, edge_infer, load, serialize
from errors import EmptyCase, GwShmError, InvalidArgument, MissingBaseline, NoBaselineRows, StorageError
from features import GwFeatureAdapter, fit_scaler
from scenario import ScenarioConfig, default_scenario, load_scenario
from settings import LOG_FORMAT, LOG_LEVEL, PORT, WINDOW_SECONDS, WORKERS
from signal_model import Condition, generate_scenario

logger = logging.getLogger("gw_shm")

TEST_BASELINE = "Test Baseline"
CONDITION_ORDER = {Condition.BASELINE.value: 0, Condition.TRF.value: 1, Condition.LFA.value: 2}


def _scenario(args) -> ScenarioConfig:
    scenario = load_scenario(args.config) if args.config else default_scenario()
    return scenario.with_overrides(seed=args.seed, output_dir=args.out)


def _out(args) -> Path:
    return Path(_scenario(args).output_dir)


# synth

def cmd_synth(args) -> int:
    scenario = _scenario(args)
    clean = [normalize(r) for r in generate_scenario(scenario, scenario.seed)]
    records = list(clean)
    if args.augment:
        records += augment_dataset(clean, scenario.noise, scenario.seed, workers=WORKERS)
    manifest = store.save_dataset(Path(scenario.output_dir) / "dataset", records, scenario.to_dict())
    logger.info("[SYNTH] %d clean, %d total records", len(clean), len(manifest.records))
    return 0


# features

def _reference_entries(manifest: store.DatasetManifest, temperature: float) -> List[store.RecordEntry]:
    refs: Dict[str, store.RecordEntry] = {}
    for entry in manifest.records:
        if (entry.condition == Condition.BASELINE.value and entry.noise_copy == 0
                and entry.temperature_c == temperature):
            refs.setdefault(entry.path_id, entry)
    return list(refs.values())


def _reference_temperature(manifest: store.DatasetManifest, override: Optional[float]) -> float:
    if override is not None:
        return override
    return float(manifest.scenario.get("propagation", {}).get("reference_temperature", 30.0))


def _adapter_for(root: Path, manifest: store.DatasetManifest, temperature: float) -> GwFeatureAdapter:
    refs = _reference_entries(manifest, temperature)
    if not refs:
        raise MissingBaseline(f"dataset has no clean Baseline record at {temperature:g} C")
    window = float(manifest.scenario.get("window_seconds", WINDOW_SECONDS))
    return GwFeatureAdapter.from_reference_records(store.load_records(root, manifest, refs), window)


def _select(manifest: store.DatasetManifest, which: str) -> List[store.RecordEntry]:
    if which == "auto":
        which = "noisy" if any(e.noise_copy > 0 for e in manifest.records) else "clean"
    if which == "all":
        return list(manifest.records)
    return [e for e in manifest.records if (e.noise_copy > 0) == (which == "noisy")]


def cmd_features(args) -> int:
    out = _out(args)
    root = Path(args.dataset) if args.dataset else out / "dataset"
    manifest = store.load_manifest(root)
    adapter = _adapter_for(root, manifest, _reference_temperature(manifest, args.baseline_temperature))
    records = store.load_records(root, manifest, _select(manifest, args.records))
    table = adapter.extract_batch_features(records)
    store.write_features_csv(Path(args.output) if args.output else out / "features.csv", records, table)
    return 0


# train

def cmd_train(args) -> int:
    scenario = _scenario(args)
    out = Path(scenario.output_dir)
    frame = store.read_features_csv(Path(args.features) if args.features else out / "features.csv")
    baseline = frame[frame["condition"] == Condition.BASELINE.value].reset_index(drop=True)
    if baseline.empty:
        raise NoBaselineRows("features contain no Baseline rows; training uses healthy data only")

    x = store.feature_matrix(baseline)
    train_idx, val_idx, test_idx = split_indices(len(x), scenario.split, scenario.seed)
    assignment = {}
    for part, idx in (("train", train_idx), ("val", val_idx), ("test", test_idx)):
        assignment.update({baseline["record_id"][i]: part for i in idx})

    scaler = fit_scaler(x[train_idx])
    scaled = scaler.transform(x)
    cfg = scenario.train_config()
    trials = []
    if args.tune:
        search = random_search(scenario.search, scaled[train_idx], scenario.seed, k=scenario.kfold, workers=WORKERS,
                               base=cfg)
        cfg = replace(search.best, seed=scenario.seed)
        trials = [dict(asdict(c), score=s) for c, s in search.trials]

    result = train(build_model(cfg.seed), scaled[train_idx], cfg, validation=scaled[val_idx])
    for name, width, count in summary(result.model):
        logger.info("[TRAIN] %-8s %4d %6d", name, width, count)
    detector = build_detector(result.model, scaler, scaled[train_idx])

    model_dir = out / "model"
    store.save_checkpoint(model_dir, store.Checkpoint(detector, cfg, scenario.seed, result.loss_history,
                                                      result.val_history, trials))
    store.save_split(model_dir, assignment)
    store.write_bytes(model_dir / "detector.gwae", serialize(detector))
    logger.info("[TRAIN] %d train / %d val / %d test baseline rows, threshold %.6g",
                len(train_idx), len(val_idx), len(test_idx), detector.threshold)
    return 0


# eval

def _eval_cases(frame: pd.DataFrame, scaled: np.ndarray, split: Dict[str, str]) -> List[EvalCase]:
    ids = frame["record_id"].tolist()
    is_baseline = (frame["condition"] == Condition.BASELINE.value).to_numpy()
    held_out = np.array([split.get(i) not in ("train", "val") for i in ids])
    cases = []
    mask = is_baseline & held_out
    if mask.any():
        cases.append(EvalCase(TEST_BASELINE, Condition.BASELINE.value, 0.0, scaled[mask],
                              [i for i, m in zip(ids, mask) if m]))

    damaged = frame[~is_baseline]
    keys = sorted({(c, float(s)) for c, s in zip(damaged["condition"], damaged["damage_size_mm"])},
                  key=lambda k: (CONDITION_ORDER.get(k[0], 9), k[1]))
    for kind, size in keys:
        mask = ((frame["condition"] == kind) & (frame["damage_size_mm"] == size)).to_numpy()
        cases.append(EvalCase(f"{kind} {size:g}mm", kind, size, scaled[mask], [i for i, m in zip(ids, mask) if m]))
    return cases


def cmd_eval(args) -> int:
    out = _out(args)
    model_dir = out / "model"
    ckpt = store.load_checkpoint(Path(args.checkpoint) if args.checkpoint else model_dir / "checkpoint.json")
    frame = store.read_features_csv(Path(args.features) if args.features else out / "features.csv")
    split = store.load_split(model_dir / "split.json")

    scaled = ckpt.detector.scaler.transform(store.feature_matrix(frame))
    cases = _eval_cases(frame, scaled, split)
    if not cases:
        raise EmptyCase("no held-out rows to evaluate")
    report = evaluate(ckpt.detector, cases)

    store.write_json(out / "eval_report.json", report.to_dict())
    rows = []
    for case in cases:
        for record_id, error in zip(case.record_ids, report.errors[case.name]):
            rows.append((record_id, case.condition, float(error),
                         DAMAGED if error > ckpt.detector.threshold else "Healthy"))
    predictions = pd.DataFrame(rows, columns=["record_id", "condition", "error", "prediction"])
    predictions = predictions.sort_values("record_id", kind="mergesort")
    store.write_bytes(out / "predictions.csv",
                      predictions.to_csv(index=False, float_format="%.17g", lineterminator="\n").encode("utf-8"))
    if args.svg:
        save_error_histogram(report, str(out / "error_histogram.svg"))
    return 0


# export / infer

def cmd_export(args) -> int:
    out = _out(args)
    model_dir = out / "model"
    ckpt = store.load_checkpoint(Path(args.checkpoint) if args.checkpoint else model_dir / "checkpoint.json")
    target = Path(args.image) if args.image else model_dir / "detector.gwae"
    image = serialize(ckpt.detector)
    store.write_bytes(target, image)
    logger.info("[EDGE] exported %s (%d bytes)", target, len(image))
    return 0


def _features_from_record(record_file: Path, baseline_temperature: Optional[float]):
    root = store.find_dataset_root(record_file)
    manifest = store.load_manifest(root)
    name = f"records/{record_file.name}"
    entry = next((e for e in manifest.records if e.file == name), None)
    if entry is None:
        raise StorageError(f"{record_file} is not indexed by {root / 'manifest.json'}")
    adapter = _adapter_for(root, manifest, _reference_temperature(manifest, baseline_temperature))
    record = store.load_records(root, manifest, [entry])[0]
    return entry.record_id, adapter.extract_features_from_record(record).as_array()


def _features_from_csv(path: Path, row: Optional[str]):
    frame = store.read_features_csv(path)
    if frame.empty:
        raise EmptyCase(f"{path} has no rows")
    if row is not None:
        frame = frame[frame["record_id"] == row]
        if frame.empty:
            raise InvalidArgument(f"no row {row!r} in {path}")
    return frame["record_id"].iloc[0], store.feature_matrix(frame.iloc[:1])[0]


def cmd_infer(args) -> int:
    image_path = Path(args.image) if args.image else _out(args) / "model" / "detector.gwae"
    model = load(store.read_bytes(image_path))
    if args.record:
        record_id, raw = _features_from_record(Path(args.record), args.baseline_temperature)
    elif args.features:
        record_id, raw = _features_from_csv(Path(args.features), args.row)
    else:
        raise InvalidArgument("infer needs --record or --features")

    error, prediction = edge_infer(model, raw, InferenceScratch())
    print(f"{record_id}, {error:.9g}, {prediction}")
    if args.bench:
        benchmark_latency(model, [raw], repeats=args.bench)
    return 3 if prediction == DAMAGED else 0


def cmd_serve(args) -> int:
    import uvicorn

    import gw_server

    image_path = args.image or str(_out(args) / "model" / "detector.gwae")
    gw_server.load_model_image(image_path)
    uvicorn.run(gw_server.app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="scenario JSON (defaults to the built-in experimental-style scenario)")
    common.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    common.add_argument("--out", default=None, help="override the scenario output directory")

    ap = argparse.ArgumentParser(prog="gw_shm", description="Guided-wave damage detection toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate the synthetic dataset")
    p.add_argument("--augment", action="store_true", help="also write noisy copies")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("features", parents=[common], help="extract the 16 features")
    p.add_argument("--dataset", help="dataset directory (default <out>/dataset)")
    p.add_argument("--output", help="features CSV (default <out>/features.csv)")
    p.add_argument("--records", choices=["auto", "clean", "noisy", "all"], default="auto",
                   help="which records get a row; auto = noisy copies when present")
    p.add_argument("--baseline-temperature", type=float, default=None,
                   help="temperature of the per-path baseline records (default: reference temperature)")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("train", parents=[common], help="train the detector on baseline rows")
    p.add_argument("--features", help="features CSV (default <out>/features.csv)")
    p.add_argument("--tune", action="store_true", help="random search + K-fold before training")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="evaluate a trained detector")
    p.add_argument("--features", help="features CSV (default <out>/features.csv)")
    p.add_argument("--checkpoint", help="checkpoint.json (default <out>/model/checkpoint.json)")
    p.add_argument("--svg", action="store_true", help="also write error_histogram.svg")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export", parents=[common], help="write the edge image")
    p.add_argument("--checkpoint", help="checkpoint.json (default <out>/model/checkpoint.json)")
    p.add_argument("--image", help="output image (default <out>/model/detector.gwae)")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("infer", parents=[common], help="classify one record or features row")
    p.add_argument("--image", help="edge image (default <out>/model/detector.gwae)")
    source = p.add_mutually_exclusive_group()
    source.add_argument("--record", help="record file inside a dataset directory")
    source.add_argument("--features", help="features CSV")
    p.add_argument("--row", help="record_id of the features row (default: first row)")
    p.add_argument("--baseline-temperature", type=float, default=None)
    p.add_argument("--bench", type=int, default=0, metavar="N", help="time N repeated inferences")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("serve", parents=[common], help="run the inference service")
    p.add_argument("--image", help="edge image (default <out>/model/detector.gwae)")
    p.add_argument("--host", default="0.0.0.0")
    p.add_argument("--port", type=int, default=PORT)
    p.set_defaults(func=cmd_serve)
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=LOG_LEVEL, format=LOG_FORMAT, stream=sys.stderr)
    try:
        return args.func(args)
    except GwShmError as exc:
        print(exc.line(), file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(StorageError(str(exc)).line(), file=sys.stderr)
        return StorageError.exit_code


if __name__ == "__main__":
    sys.exit(main())
