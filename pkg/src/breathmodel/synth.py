"""Synthetic sinusoidal breathing datasets and correlated 3-D marker traces.

Each breathing period is an ``A * sin^2(pi * t / T)`` bump (the trace dwells
near end-exhale) on top of a linear baseline drift ``m * t``.  The drift
slope ``m`` is drawn from the interval of a class (down / regular / up),
which becomes the sample's label.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, replace

import numpy as np

from .dataset import LabeledDataset
from .errors import ConfigError

CLASS_NAMES = ("down", "regular", "up")
DEFAULT_SLOPES = ((-0.02, -0.005), (-0.002, 0.002), (0.005, 0.02))


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    num_samples: int = 1000
    periods_per_sample: int = 25
    sample_rate: float = 26.0
    base_amplitude: float = 5.0
    base_period: float = 4.0
    slope_classes: tuple = DEFAULT_SLOPES
    period_jitter: float = 0.15
    amplitude_jitter: float = 0.2
    noise_sigma: float = 0.1
    timing_noise: float = 0.02
    vary_period_amplitude: bool = False
    marker_direction: tuple = (0.3, 0.2, 0.93)
    marker_offset: tuple = (12.0, -4.0, 150.0)

    def __post_init__(self):
        object.__setattr__(self, "slope_classes", tuple(tuple(float(v) for v in r) for r in self.slope_classes))
        object.__setattr__(self, "marker_direction", tuple(float(v) for v in self.marker_direction))
        object.__setattr__(self, "marker_offset", tuple(float(v) for v in self.marker_offset))

    def validate(self) -> "SynthConfig":
        if self.num_samples < 1:
            raise ConfigError("num_samples must be >= 1")
        if self.periods_per_sample < 1:
            raise ConfigError("periods_per_sample must be >= 1")
        if self.sample_rate <= 0:
            raise ConfigError("sample_rate must be positive")
        if self.base_period <= 0 or self.base_amplitude <= 0:
            raise ConfigError("base_period and base_amplitude must be positive")
        if min(self.period_jitter, self.amplitude_jitter, self.noise_sigma, self.timing_noise) < 0:
            raise ConfigError("jitter and noise levels must be >= 0")
        ranges = sorted(self.slope_classes)
        for lo, hi in ranges:
            if lo > hi:
                raise ConfigError(f"slope range ({lo}, {hi}) is reversed")
        for (lo1, hi1), (lo2, hi2) in zip(ranges, ranges[1:]):
            if lo2 <= hi1:
                raise ConfigError(f"slope ranges ({lo1}, {hi1}) and ({lo2}, {hi2}) overlap")
        if np.linalg.norm(self.marker_direction) == 0:
            raise ConfigError("marker_direction must be non-zero")
        return self

    @property
    def num_classes(self) -> int:
        return len(self.slope_classes)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["slope_classes"] = [list(r) for r in self.slope_classes]
        d["marker_direction"] = list(self.marker_direction)
        d["marker_offset"] = list(self.marker_offset)
        return d

    @classmethod
    def s1(cls, **kw) -> "SynthConfig":
        """Slope-only experiment."""
        return cls(vary_period_amplitude=False, **kw)

    @classmethod
    def s2(cls, **kw) -> "SynthConfig":
        """Slope plus per-period period/amplitude variability."""
        return cls(vary_period_amplitude=True, **kw)

    def replace(self, **kw) -> "SynthConfig":
        return replace(self, **kw)


@dataclass
class SampleTrace:
    """One rendered sample with its noise-free per-period ground truth."""

    times: np.ndarray
    values: np.ndarray
    periods: np.ndarray  # (n_periods, 6) exact tuples of the noise-free waveform
    starts: np.ndarray  # EE time of each period
    label: int
    slope: float


@dataclass
class Marker3DSeries:
    sample_rate: float
    positions: np.ndarray  # (n, 3) mm
    duration: float

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.positions)) / self.sample_rate


def class_names(num_classes: int) -> list[str]:
    if num_classes == len(CLASS_NAMES):
        return list(CLASS_NAMES)
    return [f"c{k}" for k in range(num_classes)]


def _jitter(rng, sigma, size):
    if sigma == 0:
        return np.ones(size)
    return np.clip(np.exp(rng.normal(0.0, sigma, size)), 0.5, 2.0)


def _sample_params(config: SynthConfig, index: int):
    rng = np.random.default_rng([config.seed, index])
    n = config.periods_per_sample
    label = int(rng.integers(config.num_classes))
    lo, hi = config.slope_classes[label]
    slope = float(rng.uniform(lo, hi)) if hi > lo else lo
    if config.vary_period_amplitude:
        periods = config.base_period * _jitter(rng, config.period_jitter, n)
        amps = config.base_amplitude * _jitter(rng, config.amplitude_jitter, n)
    else:
        periods = np.full(n, config.base_period)
        amps = np.full(n, config.base_amplitude)
    return rng, label, slope, periods, amps


def _tuples(slope, periods, amps):
    starts = np.concatenate([[0.0], np.cumsum(periods)[:-1]])
    half = periods / 2.0
    out = np.empty((len(periods), 6))
    out[:, 0] = slope * starts
    out[:, 1] = half
    out[:, 2] = 0.5 * amps + slope * (starts + periods / 4.0)
    out[:, 3] = amps + slope * (starts + half)
    out[:, 4] = half
    out[:, 5] = 0.5 * amps + slope * (starts + 3.0 * periods / 4.0)
    return out, starts


def generate_sinusoid_dataset(config: SynthConfig) -> LabeledDataset:
    """Draw ``num_samples`` labeled breathing vectors.

    Sample ``i`` depends only on ``(seed, i)``.  Amplitude knots get
    ``noise_sigma`` Gaussian noise and the two time gaps ``timing_noise``.
    """
    config.validate()
    n, nt = config.num_samples, config.periods_per_sample
    x = np.empty((n, nt, 6))
    labels = np.empty(n, dtype=np.int64)
    for i in range(n):
        rng, label, slope, periods, amps = _sample_params(config, i)
        tup, _ = _tuples(slope, periods, amps)
        if config.noise_sigma > 0:
            tup[:, [0, 2, 3, 5]] += rng.normal(0.0, config.noise_sigma, (nt, 4))
        if config.timing_noise > 0:
            tup[:, [1, 4]] = np.maximum(tup[:, [1, 4]] + rng.normal(0.0, config.timing_noise, (nt, 2)), 1e-3)
        x[i] = tup
        labels[i] = label
    return LabeledDataset(
        x=x,
        labels=labels,
        source_ids=np.array([f"synth-{config.seed}-{i}" for i in range(n)]),
        meta={"generator": "sinusoid", "seed": config.seed, "class_names": class_names(config.num_classes)},
    )


def waveform(times, starts, periods, amps, slope):
    """Evaluate the noise-free trace at ``times`` (outside the periods: baseline drift only)."""
    times = np.asarray(times, dtype=np.float64)
    idx = np.clip(np.searchsorted(starts, times, side="right") - 1, 0, len(starts) - 1)
    local = times - starts[idx]
    inside = (local >= 0) & (local < periods[idx])
    bump = np.where(inside, amps[idx] * np.sin(np.pi * local / periods[idx]) ** 2, 0.0)
    return bump + slope * times


def sample_signal(config: SynthConfig, index: int) -> SampleTrace:
    """Render sample ``index`` as a ``sample_rate`` time series with additive noise."""
    config.validate()
    rng, label, slope, periods, amps = _sample_params(config, index)
    tup, starts = _tuples(slope, periods, amps)
    total = float(periods.sum())
    times = np.arange(int(np.floor(total * config.sample_rate)) + 1) / config.sample_rate
    values = waveform(times, starts, periods, amps, slope)
    trace_rng = np.random.default_rng([config.seed, index, 1])
    if config.noise_sigma > 0:
        values = values + trace_rng.normal(0.0, config.noise_sigma, len(values))
    return SampleTrace(times, values, tup, starts, label, slope)


def generate_marker_series(config: SynthConfig) -> Marker3DSeries:
    """A 3-D marker trace: one shared breathing signal along a fixed direction plus channel noise.

    The trace holds ``num_samples`` periods.
    """
    config.validate()
    if config.num_samples < 10:
        raise ConfigError("marker series needs at least 10 periods (num_samples >= 10)")
    rng = np.random.default_rng([config.seed, 2**31])
    n = config.num_samples
    if config.vary_period_amplitude:
        periods = config.base_period * _jitter(rng, config.period_jitter, n)
        amps = config.base_amplitude * _jitter(rng, config.amplitude_jitter, n)
    else:
        periods = np.full(n, config.base_period)
        amps = np.full(n, config.base_amplitude)
    starts = np.concatenate([[0.0], np.cumsum(periods)[:-1]])
    duration = n * config.base_period
    count = int(round(duration * config.sample_rate))
    times = np.arange(count) / config.sample_rate
    signal = waveform(times, starts, periods, amps, 0.0)
    direction = np.asarray(config.marker_direction) / np.linalg.norm(config.marker_direction)
    positions = np.asarray(config.marker_offset) + signal[:, None] * direction[None, :]
    if config.noise_sigma > 0:
        positions = positions + rng.normal(0.0, config.noise_sigma, positions.shape)
    return Marker3DSeries(config.sample_rate, positions, duration)
