#!/usr/bin/env python3
"""
Synthetic guided-wave signal model.

Stands in for the lab capture and the FE simulations: a 5-cycle Hanning tone
burst is delayed and scaled along a Tx-Rx path, with the A0 amplitude and group
velocity shifted by temperature and by the damage under the path. A faster,
weaker companion packet keeps the first 200 us from being a single wavepacket.
It shares the temperature attenuation but not the damage, so on a healthy path
the companion-to-A0 ratio holds at secondary_mode_ratio at every temperature.
"""

import itertools
import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import TYPE_CHECKING, List, Optional

import numpy as np
from scipy.signal import hilbert
from scipy.signal.windows import hann

from errors import InvalidArgument
from settings import RECORD_LENGTH, REFERENCE_TEMPERATURE_C, SAMPLE_RATE_HZ

if TYPE_CHECKING:
    from scenario import ScenarioConfig

logger = logging.getLogger(__name__)

SECONDARY_VELOCITY_FACTOR = 3.0
MAX_DAMAGE_SIZE_MM = 50.0


class Condition(str, Enum):
    BASELINE = "Baseline"
    TRF = "TRF"
    LFA = "LFA"


# Sign of the A0 amplitude/velocity shift per damage kind:
# disbond (LFA) raises both, delamination (TRF) lowers both.
DAMAGE_SIGN = {Condition.BASELINE: 0.0, Condition.TRF: -1.0, Condition.LFA: 1.0}


@dataclass(frozen=True, eq=False)
class ToneBurst:
    center_frequency: float
    cycles: int
    sample_rate: float
    samples: np.ndarray = field(repr=False)

    @property
    def duration(self) -> float:
        return (len(self.samples) - 1) / self.sample_rate


@dataclass(frozen=True)
class EnvCondition:
    temperature: float


@dataclass(frozen=True)
class DamageSpec:
    kind: Condition = Condition.BASELINE
    size: float = 0.0

    def __post_init__(self):
        kind = Condition(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is Condition.BASELINE:
            if self.size != 0:
                raise InvalidArgument(f"Baseline damage must have size 0, got {self.size}")
        elif not (1.0 <= self.size <= MAX_DAMAGE_SIZE_MM):
            raise InvalidArgument(f"damage size must be in [1, {MAX_DAMAGE_SIZE_MM:g}] mm, got {self.size}")


@dataclass(frozen=True)
class PathSpec:
    path_id: str
    tx_rx_distance: float = 180.0  # mm
    orientation: str = "horizontal"

    def __post_init__(self):
        if not self.tx_rx_distance > 0:
            raise InvalidArgument(f"path {self.path_id}: tx_rx_distance must be > 0")
        if self.orientation not in ("horizontal", "vertical"):
            raise InvalidArgument(f"path {self.path_id}: unknown orientation {self.orientation!r}")


@dataclass(frozen=True)
class PropagationParams:
    """A0 propagation coefficients.

    Damage gains are magnitudes; the sign comes from the damage kind
    (positive for LFA, negative for TRF).
    """

    v0: float = 1.061  # km/s, i.e. mm/us
    alpha_amp_temp: float = 0.003  # per degC
    beta_vel_temp: float = -0.0005  # per degC
    damage_amp_gain: float = 0.01  # per mm
    damage_vel_gain: float = 0.002  # per mm
    reference_temperature: float = REFERENCE_TEMPERATURE_C
    secondary_mode_ratio: float = 0.3

    def __post_init__(self):
        if not self.v0 > 0:
            raise InvalidArgument("v0 must be > 0")
        if not self.alpha_amp_temp > 0:
            raise InvalidArgument("alpha_amp_temp must be > 0")
        if self.damage_amp_gain < 0 or self.damage_vel_gain < 0:
            raise InvalidArgument("damage gains are magnitudes and must be >= 0")
        if self.secondary_mode_ratio < 0:
            raise InvalidArgument("secondary_mode_ratio must be >= 0")

    def amplitude(self, temperature: float, damage: DamageSpec) -> float:
        sign = DAMAGE_SIGN[damage.kind]
        return ((1.0 - self.alpha_amp_temp * (temperature - self.reference_temperature))
                * (1.0 + sign * self.damage_amp_gain * damage.size))

    def velocity(self, temperature: float, damage: DamageSpec) -> float:
        sign = DAMAGE_SIGN[damage.kind]
        return (self.v0 * (1.0 + self.beta_vel_temp * (temperature - self.reference_temperature))
                * (1.0 + sign * self.damage_vel_gain * damage.size))

    def check_ranges(self, temperatures: List[float], max_size: float) -> None:
        """Reject coefficient sets whose amplitude or velocity goes nonpositive."""
        for temp in temperatures:
            for kind in (Condition.TRF, Condition.LFA):
                damage = DamageSpec(kind, max_size) if max_size >= 1 else DamageSpec()
                if self.amplitude(temp, damage) <= 0 or self.velocity(temp, damage) <= 0:
                    raise InvalidArgument(
                        f"amplitude/velocity scale not positive at T={temp:g} C, {kind.value} {max_size:g} mm")


@dataclass(frozen=True, eq=False)
class GwRecord:
    samples: np.ndarray = field(repr=False)
    path: PathSpec
    env: EnvCondition
    damage: DamageSpec = DamageSpec()
    sample_rate: float = SAMPLE_RATE_HZ
    noise_copy: int = 0

    @property
    def condition_label(self) -> Condition:
        return self.damage.kind

    @property
    def record_id(self) -> str:
        return (f"{self.damage.kind.value}_{self.damage.size:04.1f}mm_{self.path.path_id}"
                f"_T{self.env.temperature:+06.1f}_c{self.noise_copy:03d}")

    def with_samples(self, samples: np.ndarray, **changes) -> "GwRecord":
        return replace(self, samples=samples, **changes)


def hanning_tone_burst(center_frequency: float = 75e3, cycles: int = 5,
                       sample_rate: float = SAMPLE_RATE_HZ) -> ToneBurst:
    """Hann-windowed sine burst, peak normalized to 1.0.

    Args:
        center_frequency: carrier frequency in Hz
        cycles: number of carrier cycles under the window
        sample_rate: sampling rate in Hz, at least 10x the carrier

    Returns:
        ToneBurst of round(cycles / f0 * fs) samples with zero endpoints
    """
    if not center_frequency > 0 or not sample_rate > 0:
        raise InvalidArgument("center frequency and sample rate must be > 0")
    if cycles < 1:
        raise InvalidArgument(f"cycles must be >= 1, got {cycles}")
    if sample_rate < 10 * center_frequency:
        raise InvalidArgument(f"sample rate {sample_rate:g} Hz undersamples a {center_frequency:g} Hz burst")

    n = int(round(cycles / center_frequency * sample_rate))
    i = np.arange(n)
    samples = hann(n, sym=True) * np.sin(2 * np.pi * center_frequency * i / sample_rate)
    samples = samples / np.max(np.abs(samples))
    return ToneBurst(center_frequency, cycles, sample_rate, samples)


def _place_packet(out: np.ndarray, burst: ToneBurst, center_time: float, gain: float) -> None:
    """Add the burst, centered on center_time (s), scaled by gain, into out."""
    t = np.arange(len(out)) / burst.sample_rate
    burst_t = np.arange(len(burst.samples)) / burst.sample_rate
    start = center_time - burst.duration / 2
    out += gain * np.interp(t - start, burst_t, burst.samples, left=0.0, right=0.0)


def propagate(burst: ToneBurst, path: PathSpec, env: EnvCondition, damage: DamageSpec,
              params: PropagationParams, length: int = RECORD_LENGTH) -> GwRecord:
    """Synthesize the clean received signal for one path/temperature/damage."""
    amplitude = params.amplitude(env.temperature, damage)
    velocity = params.velocity(env.temperature, damage)
    if amplitude <= 0 or velocity <= 0:
        raise InvalidArgument(f"nonpositive amplitude/velocity at T={env.temperature:g} C")

    # mm / (mm/us) -> us
    arrival = path.tx_rx_distance / velocity * 1e-6
    window = length / burst.sample_rate
    if arrival + burst.duration / 2 > window:
        raise InvalidArgument(f"A0 arrival {arrival * 1e6:.1f} us exceeds the {window * 1e6:.1f} us capture window")

    samples = np.zeros(length)
    _place_packet(samples, burst, arrival, amplitude)

    if params.secondary_mode_ratio > 0:
        # temperature attenuates both modes; the damage sits in the A0 path only
        undamaged = DamageSpec()
        fast = SECONDARY_VELOCITY_FACTOR * params.velocity(env.temperature, undamaged)
        gain = params.secondary_mode_ratio * params.amplitude(env.temperature, undamaged)
        _place_packet(samples, burst, path.tx_rx_distance / fast * 1e-6, gain)

    return GwRecord(samples=samples, path=path, env=env, damage=damage, sample_rate=burst.sample_rate)


def reference_record(path: PathSpec, params: PropagationParams, burst: Optional[ToneBurst] = None,
                     length: int = RECORD_LENGTH) -> GwRecord:
    """Clean undamaged record at the reference temperature: the path baseline."""
    burst = burst or hanning_tone_burst()
    return propagate(burst, path, EnvCondition(params.reference_temperature), DamageSpec(), params, length)


def envelope_peak_time(record: GwRecord) -> float:
    """Time (s) of the analytic-envelope maximum of a record."""
    envelope = np.abs(hilbert(record.samples))
    return float(np.argmax(envelope)) / record.sample_rate


def jittered_paths(paths: List[PathSpec], jitter_mm: float, seed: int) -> List[PathSpec]:
    """Per-path distance perturbation, for scenarios that model mounting tolerance."""
    if jitter_mm <= 0:
        return list(paths)
    rng = np.random.default_rng(seed)
    offsets = rng.uniform(-jitter_mm, jitter_mm, size=len(paths))
    return [replace(p, tx_rx_distance=p.tx_rx_distance + float(d)) for p, d in zip(paths, offsets)]


def generate_scenario(scenario: "ScenarioConfig", seed: int) -> List[GwRecord]:
    """Cartesian product of the scenario axes, one clean record each."""
    if not scenario.temperatures:
        raise InvalidArgument("scenario has no temperatures")
    if not scenario.paths:
        raise InvalidArgument("scenario has no paths")
    if not scenario.conditions:
        raise InvalidArgument("scenario has no conditions")

    params = scenario.propagation
    sizes = [s for c in scenario.conditions for s in c.sizes]
    params.check_ranges(scenario.temperatures, max(sizes, default=0.0))

    burst = hanning_tone_burst(scenario.center_frequency, scenario.cycles, scenario.sample_rate)
    paths = jittered_paths(scenario.paths, scenario.distance_jitter_mm, seed)

    records = []
    for cond in scenario.conditions:
        for size in cond.sizes:
            damage = DamageSpec(cond.kind, size)
            for path, temp in itertools.product(paths, scenario.temperatures):
                records.append(propagate(burst, path, EnvCondition(temp), damage, params, scenario.record_length))

    logger.info("[SYNTH] generated %d clean records (%d temps x %d paths x %d cases)",
                len(records), len(scenario.temperatures), len(paths), len(sizes))
    return records
