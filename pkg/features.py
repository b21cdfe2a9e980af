#!/usr/bin/env python3
"""
Guided-Wave Feature Adapter
Turns the first 200 us of a normalized record into the 16 time-domain
features the autoencoder consumes. Five of them compare the record against
the baseline reference of its path.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, NamedTuple, Sequence

import numpy as np

from errors import DegenerateInput, DimensionMismatch, InvalidArgument, MissingBaseline, TooFewSamples
from settings import WINDOW_SECONDS
from signal_model import GwRecord

logger = logging.getLogger(__name__)

# Network input contract: this order is fixed
FEATURE_NAMES = [
    # Single-signal statistics (12)
    'mean', 'median', 'mad',
    'variance', 'std_dev', 'rms',
    'rmsd',
    'kurtosis', 'skew',
    'crest_factor', 'impulse_factor', 'shape_factor',

    # Baseline comparisons (4, plus rmsd above)
    'peak_to_peak_diff',
    'energy_ratio', 'damage_index', 'norm_energy_diff',
]
FEATURE_COUNT = len(FEATURE_NAMES)
assert FEATURE_COUNT == 16, f"Expected 16 features, got {FEATURE_COUNT}"


class FeatureVector(NamedTuple):
    mean: float
    median: float
    mad: float
    variance: float
    std_dev: float
    rms: float
    rmsd: float
    kurtosis: float
    skew: float
    crest_factor: float
    impulse_factor: float
    shape_factor: float
    peak_to_peak_diff: float
    energy_ratio: float
    damage_index: float
    norm_energy_diff: float

    def as_array(self) -> np.ndarray:
        return np.array(self, dtype=np.float64)

    @classmethod
    def from_array(cls, values) -> "FeatureVector":
        values = np.asarray(values, dtype=np.float64).ravel()
        if len(values) != FEATURE_COUNT:
            raise DimensionMismatch(f"expected {FEATURE_COUNT} features, got {len(values)}")
        return cls(*(float(v) for v in values))


assert list(FeatureVector._fields) == FEATURE_NAMES


@dataclass(frozen=True, eq=False)
class BaselineReference:
    samples: np.ndarray
    peak_to_peak: float
    energy: float
    sample_rate: float

    @classmethod
    def from_window(cls, window: np.ndarray, sample_rate: float) -> "BaselineReference":
        window = np.asarray(window, dtype=np.float64)
        energy = float(np.sum(window ** 2)) / sample_rate
        if energy <= 0:
            raise DegenerateInput("baseline window has zero energy")
        return cls(window, float(np.max(window) - np.min(window)), energy, sample_rate)


@dataclass(frozen=True, eq=False)
class FeatureScaler:
    """Per-feature min-max map onto [-1, 1]; constant features map to 0."""

    minimum: np.ndarray
    maximum: np.ndarray

    @property
    def center(self) -> np.ndarray:
        return (self.minimum + self.maximum) / 2

    @property
    def scale(self) -> np.ndarray:
        span = self.maximum - self.minimum
        return np.divide(2.0, span, out=np.zeros_like(span), where=span > 0)

    def transform(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=np.float64)
        if values.shape[-1] != FEATURE_COUNT:
            raise DimensionMismatch(f"expected {FEATURE_COUNT} features, got {values.shape[-1]}")
        return (values - self.center) * self.scale


def crop_window(record: GwRecord, duration: float = WINDOW_SECONDS) -> np.ndarray:
    """First round(duration * fs) samples of a record."""
    if not duration > 0:
        raise InvalidArgument(f"window duration must be > 0, got {duration}")
    n = int(round(duration * record.sample_rate))
    if n > len(record.samples):
        raise InvalidArgument(f"record {record.record_id} has {len(record.samples)} samples, window needs {n}")
    return record.samples[:n]


def extract_features(window: np.ndarray, baseline: BaselineReference) -> FeatureVector:
    """
    Compute the 16 features of one window.

    Args:
        window: normalized samples, same length and rate as the baseline
        baseline: reference window of the same path

    Returns:
        FeatureVector in FEATURE_NAMES order
    """
    x = np.asarray(window, dtype=np.float64)
    if len(x) != len(baseline.samples):
        raise DimensionMismatch(f"window has {len(x)} samples, baseline has {len(baseline.samples)}")

    n = len(x)
    mu = float(np.sum(x)) / n
    centered = x - mu
    variance = float(np.sum(centered ** 2)) / n
    sigma = np.sqrt(variance)
    if sigma == 0:
        raise DegenerateInput("constant window (sigma = 0)")

    median = float(np.median(x))
    abs_x = np.abs(x)
    abs_mean = float(np.sum(abs_x)) / n
    peak = float(np.max(abs_x))
    rms = float(np.sqrt(np.sum(x ** 2) / n))

    # Integrals are sums times the sample period; dt cancels in every ratio.
    dt = 1.0 / baseline.sample_rate
    energy = float(np.sum(x ** 2)) * dt
    diff_energy = float(np.sum((x - baseline.samples) ** 2)) * dt
    damage_index = diff_energy / baseline.energy

    return FeatureVector(
        mean=mu,
        median=median,
        mad=float(np.sum(np.abs(centered))) / n,
        variance=variance,
        std_dev=float(sigma),
        rms=rms,
        rmsd=float(np.sqrt(damage_index)),
        kurtosis=float(np.sum((centered / sigma) ** 4)) / n,
        skew=3.0 * (mu - median) / float(sigma),
        crest_factor=peak / rms,
        impulse_factor=peak / abs_mean,
        shape_factor=rms / abs_mean,
        peak_to_peak_diff=float(np.max(x) - np.min(x)) - baseline.peak_to_peak,
        energy_ratio=energy / baseline.energy,
        damage_index=damage_index,
        norm_energy_diff=(energy - baseline.energy) / baseline.energy,
    )


def fit_scaler(vectors: Sequence) -> FeatureScaler:
    """Fit min-max scaling on training feature vectors (rows)."""
    table = np.asarray([np.asarray(v, dtype=np.float64) for v in vectors])
    if len(table) < 2:
        raise TooFewSamples(f"need at least 2 vectors to fit a scaler, got {len(table)}")
    if table.shape[1] != FEATURE_COUNT:
        raise DimensionMismatch(f"expected {FEATURE_COUNT} features, got {table.shape[1]}")
    return FeatureScaler(table.min(axis=0), table.max(axis=0))


def apply_scaler(scaler: FeatureScaler, vector) -> FeatureVector:
    """Scaled copy of one vector; out-of-range values are not clipped."""
    return FeatureVector.from_array(scaler.transform(np.asarray(vector, dtype=np.float64)))


class GwFeatureAdapter:
    """Batch feature extraction against per-path baselines."""

    def __init__(self, baselines: Dict[str, BaselineReference], window_seconds: float = WINDOW_SECONDS):
        self.baselines = baselines
        self.window_seconds = window_seconds
        self.feature_count = len(FEATURE_NAMES)

    @classmethod
    def from_reference_records(cls, references: Sequence[GwRecord],
                               window_seconds: float = WINDOW_SECONDS) -> "GwFeatureAdapter":
        """Build from one normalized clean reference record per path."""
        baselines = {
            r.path.path_id: BaselineReference.from_window(crop_window(r, window_seconds), r.sample_rate)
            for r in references
        }
        return cls(baselines, window_seconds)

    def baseline_for(self, record: GwRecord) -> BaselineReference:
        try:
            return self.baselines[record.path.path_id]
        except KeyError:
            raise MissingBaseline(f"no baseline reference for path {record.path.path_id}") from None

    def extract_features_from_record(self, record: GwRecord) -> FeatureVector:
        baseline = self.baseline_for(record)
        return extract_features(crop_window(record, self.window_seconds), baseline)

    def extract_batch_features(self, records: Sequence[GwRecord]) -> np.ndarray:
        """
        Extract features for multiple records.

        Returns:
            2D numpy array (n_records, 16)
        """
        rows = [self.extract_features_from_record(r) for r in records]
        logger.info("[FEATURES] extracted %d feature vectors", len(rows))
        return np.array(rows, dtype=np.float64).reshape(len(rows), FEATURE_COUNT)

    def get_feature_names(self) -> List[str]:
        return FEATURE_NAMES.copy()


def features_table(records: Sequence[GwRecord], references: Sequence[GwRecord],
                   window_seconds: float = WINDOW_SECONDS) -> np.ndarray:
    """(n, 16) feature table for records, using one reference record per path."""
    return GwFeatureAdapter.from_reference_records(references, window_seconds).extract_batch_features(records)
