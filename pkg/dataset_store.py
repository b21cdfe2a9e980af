#!/usr/bin/env python3
"""
On-disk layout of a run.

    <out>/dataset/manifest.json        record index + scenario echo
    <out>/dataset/records/<id>.gwrc    one binary record per file
    <out>/features.csv                 metadata + 16 features per record
    <out>/model/checkpoint.json        trained detector
    <out>/model/split.json             record_id -> train | val | test
    <out>/model/detector.gwae          edge image

Record files carry a 16-byte header ("GWRC", version u16, sample count u32,
sample rate u32 Hz, reserved u16) followed by float32 little-endian samples.
"""

import json
import logging
import os
import struct
import tempfile
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from autoencoder import DenseAutoencoder, TrainConfig
from detector import AnomalyDetector
from errors import SchemaMismatch, StorageError
from features import FEATURE_NAMES, FeatureScaler
from signal_model import Condition, DamageSpec, EnvCondition, GwRecord, PathSpec

logger = logging.getLogger(__name__)

RECORD_MAGIC = b"GWRC"
RECORD_VERSION = 1
RECORD_SUFFIX = ".gwrc"
MANIFEST_SCHEMA_VERSION = 1
_RECORD_HEADER = struct.Struct("<4sHIIH")

META_COLUMNS = ["record_id", "condition", "damage_size_mm", "path_id", "temperature_c", "noise_copy"]


def _atomic_write(path: Path, data: bytes) -> None:
    """Write via a temp file in the same directory, then rename over path."""
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=str(path.parent), prefix=f".{path.name}.")
        try:
            with os.fdopen(fd, "wb") as handle:
                handle.write(data)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise StorageError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _json_bytes(data) -> bytes:
    return (json.dumps(data, indent=1, sort_keys=True) + "\n").encode("utf-8")


def _read_json(path: Path):
    try:
        with open(path, "r", encoding="utf-8") as handle:
            return json.load(handle)
    except FileNotFoundError as exc:
        raise StorageError(f"{path} does not exist") from exc
    except OSError as exc:
        raise StorageError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise StorageError(f"{path} is not valid JSON: {exc}") from exc


# Record files

def encode_record(samples: np.ndarray, sample_rate: float) -> bytes:
    samples = np.asarray(samples, dtype="<f4")
    header = _RECORD_HEADER.pack(RECORD_MAGIC, RECORD_VERSION, len(samples), int(round(sample_rate)), 0)
    return header + samples.tobytes()


def decode_record(data: bytes, source: str = "record") -> Tuple[np.ndarray, float]:
    if len(data) < _RECORD_HEADER.size:
        raise StorageError(f"{source}: truncated header")
    magic, version, count, rate, _ = _RECORD_HEADER.unpack_from(data, 0)
    if magic != RECORD_MAGIC:
        raise StorageError(f"{source}: not a record file (magic {magic!r})")
    if version != RECORD_VERSION:
        raise StorageError(f"{source}: unsupported record version {version}")
    if len(data) != _RECORD_HEADER.size + 4 * count:
        raise StorageError(f"{source}: expected {count} samples, file holds {(len(data) - _RECORD_HEADER.size) // 4}")
    samples = np.frombuffer(data, dtype="<f4", offset=_RECORD_HEADER.size).astype(np.float64)
    return samples, float(rate)


def read_record_file(path) -> Tuple[np.ndarray, float]:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise StorageError(f"cannot read {path}: {exc.strerror}") from exc
    return decode_record(data, str(path))


# Dataset manifest

@dataclass(frozen=True)
class RecordEntry:
    record_id: str
    file: str
    path_id: str
    tx_rx_distance_mm: float
    orientation: str
    temperature_c: float
    condition: str
    damage_size_mm: float
    noise_copy: int

    @classmethod
    def of(cls, record: GwRecord) -> "RecordEntry":
        return cls(
            record_id=record.record_id,
            file=f"records/{record.record_id}{RECORD_SUFFIX}",
            path_id=record.path.path_id,
            tx_rx_distance_mm=float(record.path.tx_rx_distance),
            orientation=record.path.orientation,
            temperature_c=float(record.env.temperature),
            condition=record.damage.kind.value,
            damage_size_mm=float(record.damage.size),
            noise_copy=int(record.noise_copy),
        )

    def to_record(self, samples: np.ndarray, sample_rate: float) -> GwRecord:
        return GwRecord(
            samples=samples,
            path=PathSpec(self.path_id, self.tx_rx_distance_mm, self.orientation),
            env=EnvCondition(self.temperature_c),
            damage=DamageSpec(Condition(self.condition), self.damage_size_mm),
            sample_rate=sample_rate,
            noise_copy=self.noise_copy,
        )


@dataclass
class DatasetManifest:
    schema_version: int
    scenario: Dict
    records: List[RecordEntry]

    def counts(self) -> Dict[str, int]:
        out: Dict[str, int] = {}
        for entry in self.records:
            key = entry.condition if entry.noise_copy == 0 else f"{entry.condition}+noise"
            out[key] = out.get(key, 0) + 1
        return out

    def to_dict(self) -> Dict:
        return {
            "schema_version": self.schema_version,
            "scenario": self.scenario,
            "record_count": len(self.records),
            "records": [asdict(e) for e in self.records],
        }


def save_dataset(root, records: Sequence[GwRecord], scenario: Dict) -> DatasetManifest:
    """Write every record, then the manifest; a failed run leaves no manifest."""
    root = Path(root)
    ordered = sorted(records, key=lambda r: r.record_id)
    ids = [r.record_id for r in ordered]
    if len(set(ids)) != len(ids):
        raise StorageError("duplicate record ids in dataset")

    manifest_path = root / "manifest.json"
    if manifest_path.exists():
        try:
            manifest_path.unlink()
        except OSError as exc:
            raise StorageError(f"cannot replace {manifest_path}: {exc.strerror}") from exc
    records_dir = root / "records"
    try:
        records_dir.mkdir(parents=True, exist_ok=True)
        for stale in records_dir.glob(f"*{RECORD_SUFFIX}"):
            stale.unlink()
    except OSError as exc:
        raise StorageError(f"cannot prepare {records_dir}: {exc.strerror or exc}") from exc

    entries = []
    for record in ordered:
        entry = RecordEntry.of(record)
        _atomic_write(root / entry.file, encode_record(record.samples, record.sample_rate))
        entries.append(entry)

    manifest = DatasetManifest(MANIFEST_SCHEMA_VERSION, scenario, entries)
    _atomic_write(manifest_path, _json_bytes(manifest.to_dict()))
    logger.info("[SYNTH] wrote %d records to %s %s", len(entries), root, manifest.counts())
    return manifest


def load_manifest(root) -> DatasetManifest:
    """Read the manifest and check it against the record files on disk."""
    root = Path(root)
    data = _read_json(root / "manifest.json")
    if data.get("schema_version") != MANIFEST_SCHEMA_VERSION:
        raise StorageError(f"unsupported manifest schema {data.get('schema_version')!r}")
    try:
        entries = [RecordEntry(**e) for e in data["records"]]
    except (KeyError, TypeError) as exc:
        raise StorageError(f"malformed manifest index: {exc}") from exc

    indexed = {e.file for e in entries}
    missing = [f for f in indexed if not (root / f).is_file()]
    if missing:
        raise StorageError(f"manifest lists {len(missing)} missing record files, e.g. {sorted(missing)[0]}")
    on_disk = {f"records/{p.name}" for p in (root / "records").glob(f"*{RECORD_SUFFIX}")}
    extra = on_disk - indexed
    if extra:
        raise StorageError(f"{len(extra)} record files are not in the manifest, e.g. {sorted(extra)[0]}")
    if data.get("record_count", len(entries)) != len(entries):
        raise StorageError("manifest record_count does not match its index")
    return DatasetManifest(data["schema_version"], data.get("scenario", {}), entries)


def load_records(root, manifest: Optional[DatasetManifest] = None,
                 entries: Optional[Sequence[RecordEntry]] = None) -> List[GwRecord]:
    root = Path(root)
    manifest = manifest or load_manifest(root)
    out = []
    for entry in entries if entries is not None else manifest.records:
        samples, rate = read_record_file(root / entry.file)
        out.append(entry.to_record(samples, rate))
    return out


def find_dataset_root(record_file) -> Path:
    """Dataset directory holding a record file (the parent of records/)."""
    path = Path(record_file).resolve()
    return path.parent.parent


# Features CSV

def write_features_csv(path, records: Sequence[GwRecord], table: np.ndarray) -> pd.DataFrame:
    frame = pd.DataFrame({
        "record_id": [r.record_id for r in records],
        "condition": [r.damage.kind.value for r in records],
        "damage_size_mm": [float(r.damage.size) for r in records],
        "path_id": [r.path.path_id for r in records],
        "temperature_c": [float(r.env.temperature) for r in records],
        "noise_copy": [int(r.noise_copy) for r in records],
    })
    features = pd.DataFrame(np.asarray(table, dtype=np.float64).reshape(len(records), len(FEATURE_NAMES)),
                            columns=FEATURE_NAMES)
    frame = pd.concat([frame, features], axis=1).sort_values("record_id", kind="mergesort").reset_index(drop=True)
    buffer = frame.to_csv(index=False, float_format="%.17g", lineterminator="\n")
    _atomic_write(Path(path), buffer.encode("utf-8"))
    logger.info("[FEATURES] wrote %d rows to %s", len(frame), path)
    return frame


def read_features_csv(path) -> pd.DataFrame:
    """Load a features CSV and check its column schema."""
    try:
        frame = pd.read_csv(path, dtype={"record_id": str, "condition": str, "path_id": str},
                            float_precision="round_trip")
    except FileNotFoundError as exc:
        raise StorageError(f"{path} does not exist") from exc
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise StorageError(f"cannot read features CSV {path}: {exc}") from exc
    columns = list(frame.columns)
    if columns != META_COLUMNS + FEATURE_NAMES:
        missing = [c for c in META_COLUMNS + FEATURE_NAMES if c not in columns]
        detail = f"missing {missing}" if missing else "feature columns out of order"
        raise SchemaMismatch(f"{path}: {detail}")
    return frame


def feature_matrix(frame: pd.DataFrame) -> np.ndarray:
    return frame[FEATURE_NAMES].to_numpy(dtype=np.float64)


# Model artifacts

@dataclass
class Checkpoint:
    detector: AnomalyDetector
    train_config: TrainConfig
    seed: int
    loss_history: List[float]
    val_history: List[float]
    search_trials: List[Dict]


def checkpoint_dict(ckpt: Checkpoint) -> Dict:
    det = ckpt.detector
    return {
        "format": "gw-shm-checkpoint",
        "version": 1,
        "seed": ckpt.seed,
        "train_config": ckpt.train_config.to_dict(),
        "model": det.model.to_dict(),
        "scaler": {"minimum": det.scaler.minimum.tolist(), "maximum": det.scaler.maximum.tolist()},
        "threshold": {"mean": det.train_error_mean, "std": det.train_error_std, "value": det.threshold},
        "loss_history": list(ckpt.loss_history),
        "val_history": list(ckpt.val_history),
        "search_trials": list(ckpt.search_trials),
        "feature_names": FEATURE_NAMES,
    }


def save_checkpoint(model_dir, ckpt: Checkpoint) -> Path:
    path = Path(model_dir) / "checkpoint.json"
    _atomic_write(path, _json_bytes(checkpoint_dict(ckpt)))
    return path


def load_checkpoint(path) -> Checkpoint:
    data = _read_json(Path(path))
    if data.get("format") != "gw-shm-checkpoint":
        raise StorageError(f"{path} is not a detector checkpoint")
    if data.get("feature_names") != FEATURE_NAMES:
        raise SchemaMismatch(f"{path}: checkpoint was trained on a different feature schema")
    try:
        scaler = FeatureScaler(np.asarray(data["scaler"]["minimum"], dtype=np.float64),
                               np.asarray(data["scaler"]["maximum"], dtype=np.float64))
        threshold = data["threshold"]
        detector = AnomalyDetector(DenseAutoencoder.from_dict(data["model"]), scaler,
                                   float(threshold["value"]), float(threshold["mean"]), float(threshold["std"]))
        return Checkpoint(detector, TrainConfig(**data["train_config"]), int(data["seed"]),
                          data.get("loss_history", []), data.get("val_history", []), data.get("search_trials", []))
    except (KeyError, TypeError, ValueError) as exc:
        raise StorageError(f"malformed checkpoint {path}: {exc}") from exc


def save_split(model_dir, assignment: Dict[str, str]) -> Path:
    path = Path(model_dir) / "split.json"
    _atomic_write(path, _json_bytes(dict(sorted(assignment.items()))))
    return path


def load_split(path) -> Dict[str, str]:
    path = Path(path)
    if not path.exists():
        return {}
    return _read_json(path)


def write_bytes(path, data: bytes) -> None:
    _atomic_write(Path(path), data)


def read_bytes(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise StorageError(f"cannot read {path}: {exc.strerror}") from exc


def write_json(path, data) -> None:
    _atomic_write(Path(path), _json_bytes(data))
