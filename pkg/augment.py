#!/usr/bin/env python3
"""
Record normalization and noise augmentation.

Clean records are scaled to [-1, 1] and then copied with a white + pink noise
mix at a fixed SNR, the way the captured data were augmented to emulate harsh
field conditions.
"""

import logging
import math
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from errors import DegenerateInput, InvalidArgument
from signal_model import GwRecord

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class NoiseSpec:
    snr_db: float = 20.0
    pink_fraction: float = 0.5
    copies: int = 50

    def __post_init__(self):
        if math.isnan(self.snr_db) or self.snr_db == -math.inf:
            raise InvalidArgument(f"snr_db must be finite (or +inf to disable noise), got {self.snr_db}")
        if not 0.0 <= self.pink_fraction <= 1.0:
            raise InvalidArgument(f"pink_fraction must be in [0, 1], got {self.pink_fraction}")
        if self.copies < 1:
            raise InvalidArgument(f"copies must be >= 1, got {self.copies}")

    @property
    def enabled(self) -> bool:
        return math.isfinite(self.snr_db)


def normalize(record: GwRecord) -> GwRecord:
    """Scale samples by the largest magnitude so max |x| = 1."""
    peak = float(np.max(np.abs(record.samples))) if len(record.samples) else 0.0
    if peak == 0.0:
        raise DegenerateInput(f"record {record.record_id} is all zeros")
    return record.with_samples(record.samples / peak)


def white_noise(n: int, power: float, seed: int) -> np.ndarray:
    """Zero-mean Gaussian noise with variance `power`."""
    if n <= 0:
        raise InvalidArgument(f"n must be > 0, got {n}")
    if power < 0:
        raise InvalidArgument(f"power must be >= 0, got {power}")
    if power == 0:
        return np.zeros(n)
    rng = np.random.default_rng(seed)
    return math.sqrt(power) * rng.standard_normal(n)


def pink_noise(n: int, power: float, seed: int) -> np.ndarray:
    """1/f noise with total power `power`, by FFT shaping of white noise."""
    if n <= 0:
        raise InvalidArgument(f"n must be > 0, got {n}")
    if power < 0:
        raise InvalidArgument(f"power must be >= 0, got {power}")
    if power == 0:
        return np.zeros(n)
    if n < 2:
        raise InvalidArgument(f"pink noise needs n >= 2 for a zero-mean signal of power {power:g}, got n={n}")

    rng = np.random.default_rng(seed)
    spectrum = np.fft.rfft(rng.standard_normal(n))
    scaling = np.zeros(len(spectrum))
    scaling[1:] = 1.0 / np.sqrt(np.arange(1, len(spectrum)))
    noise = np.fft.irfft(spectrum * scaling, n=n)
    noise -= noise.mean()
    return noise * math.sqrt(power / np.mean(noise ** 2))


def _noise_seeds(seed: int, *keys: int) -> np.ndarray:
    return np.random.SeedSequence([seed, *keys]).generate_state(2)


def add_noise_at_snr(record: GwRecord, spec: NoiseSpec, seed: int, copy: int = 1) -> GwRecord:
    """Noisy copy of a clean, normalized record at spec.snr_db.

    Signal power is measured over the whole record. The noise power is split
    pink_fraction pink / (1 - pink_fraction) white.
    """
    if record.noise_copy != 0:
        raise InvalidArgument(f"record {record.record_id} is already a noisy copy")
    if copy < 1:
        raise InvalidArgument(f"copy index must be >= 1, got {copy}")
    if not spec.enabled:
        return record.with_samples(record.samples.copy(), noise_copy=copy)

    signal_power = float(np.mean(record.samples ** 2))
    if signal_power == 0.0:
        raise DegenerateInput(f"record {record.record_id} has zero power")

    noise_power = signal_power / 10 ** (spec.snr_db / 10)
    white_seed, pink_seed = _noise_seeds(seed)
    n = len(record.samples)
    noise = (pink_noise(n, spec.pink_fraction * noise_power, int(pink_seed))
             + white_noise(n, (1 - spec.pink_fraction) * noise_power, int(white_seed)))
    return record.with_samples(record.samples + noise, noise_copy=copy)


def measure_snr_db(clean: GwRecord, noisy: GwRecord) -> float:
    """Realized SNR of a noisy copy against its clean source."""
    noise = noisy.samples - clean.samples
    noise_power = float(np.mean(noise ** 2))
    if noise_power == 0:
        return math.inf
    return 10 * math.log10(float(np.mean(clean.samples ** 2)) / noise_power)


def copy_seed(seed: int, record_id: str, copy: int) -> int:
    """Per-copy seed derived from (seed, record id, copy index)."""
    return int(np.random.SeedSequence([seed, zlib.crc32(record_id.encode()), copy]).generate_state(1)[0])


def augment_dataset(records: Sequence[GwRecord], spec: NoiseSpec, seed: int, workers: int = 1) -> List[GwRecord]:
    """spec.copies noisy copies of every clean record, in input order."""

    def augment_one(record: GwRecord) -> List[GwRecord]:
        return [add_noise_at_snr(record, spec, copy_seed(seed, record.record_id, c), copy=c)
                for c in range(1, spec.copies + 1)]

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            batches = list(pool.map(augment_one, records))
    else:
        batches = [augment_one(r) for r in records]

    out = [r for batch in batches for r in batch]
    logger.info("[AUGMENT] %d clean -> %d noisy records at %.1f dB SNR", len(records), len(out), spec.snr_db)
    return out
