"""Compression of raw marker traces into breathing vectors, plus slope labeling and feature scaling."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter1d
from scipy.signal import find_peaks

from .dataset import BreathingVector, PeriodTuple
from .errors import DegenerateInputError, InsufficientDataError, SegmentationError
from .synth import Marker3DSeries

SMOOTH_WINDOW_S = 0.5
MIN_SEPARATION_S = 1.5
DOWN, REGULAR, UP = 0, 1, 2


@dataclass
class PrincipalAxisSeries:
    sample_rate: float
    values: np.ndarray
    variance_retained: float
    projection_axis: np.ndarray
    channel_means: np.ndarray

    def lift(self, values=None) -> np.ndarray:
        """Map 1-D positions back to 3-D along the projection axis."""
        v = self.values if values is None else np.asarray(values)
        return self.channel_means[None, :] + v[:, None] * self.projection_axis[None, :]


def remove_artifacts(series: Marker3DSeries) -> Marker3DSeries:
    """Hook for dropping machine-recalibration glitches; synthetic traces have none."""
    return series


def pca_project(series: Marker3DSeries) -> PrincipalAxisSeries:
    """Project a 3-D trace onto its axis of largest variance.

    The axis sign is chosen so the projected trace has non-negative skewness,
    which puts the brief inhale peaks above the long exhale dwell.
    """
    pos = np.asarray(series.positions, dtype=np.float64)
    if pos.ndim != 2 or pos.shape[1] != 3 or len(pos) < 2:
        raise DegenerateInputError("pca_project needs at least 2 samples of (x, y, z)")
    if not np.isfinite(pos).all():
        raise DegenerateInputError("positions contain non-finite values")
    means = pos.mean(axis=0)
    centered = pos - means
    cov = centered.T @ centered / (len(pos) - 1)
    evals, evecs = np.linalg.eigh(cov)
    total = evals.sum()
    if total <= 0:
        raise DegenerateInputError("input has zero variance")
    axis = evecs[:, -1]
    values = centered @ axis
    skew = np.mean(values**3)
    if skew < 0 or (skew == 0 and axis[np.argmax(np.abs(axis))] < 0):
        axis, values = -axis, -values
    return PrincipalAxisSeries(
        sample_rate=float(series.sample_rate),
        values=values,
        variance_retained=float(np.clip(evals[-1] / total, 0.0, 1.0)),
        projection_axis=axis / np.linalg.norm(axis),
        channel_means=means,
    )


def detect_end_exhale(values, sample_rate) -> np.ndarray:
    """Indices of end-exhale minima: smoothed-series minima, refined on the raw series."""
    values = np.asarray(values, dtype=np.float64)
    window = max(1, int(round(SMOOTH_WINDOW_S * sample_rate)))
    smooth = uniform_filter1d(values, window, mode="nearest")
    span = np.percentile(values, 95) - np.percentile(values, 5)
    distance = max(1, int(round(MIN_SEPARATION_S * sample_rate)))
    minima, _ = find_peaks(-smooth, distance=distance, prominence=0.2 * span if span > 0 else None)
    radius = window // 2 + 1
    refined = []
    for m in minima:
        lo, hi = max(0, m - radius), min(len(values), m + radius + 1)
        refined.append(lo + int(np.argmin(values[lo:hi])))
    return np.unique(np.asarray(refined, dtype=np.int64))


def _value_at(values, position):
    """Linear interpolation of ``values`` at a fractional index."""
    return float(np.interp(position, np.arange(len(values)), values))


def segment_periods(series, sample_rate=None, return_indices=False):
    """Split a 1-D trace into periods between consecutive end-exhale points.

    Accepts a :class:`PrincipalAxisSeries` or a raw array with ``sample_rate``.
    EI is the maximum inside the period; MI and ME are the trace values at
    the temporal midpoints of the inhale and exhale branches.
    """
    if isinstance(series, PrincipalAxisSeries):
        values, fs = series.values, series.sample_rate
    else:
        values, fs = np.asarray(series, dtype=np.float64), float(sample_rate)
    ee = detect_end_exhale(values, fs)
    if len(ee) < 2:
        raise SegmentationError(f"found {len(ee)} end-exhale points, need at least 2")
    out = []
    for e0, e1 in zip(ee[:-1], ee[1:]):
        ei = e0 + int(np.argmax(values[e0:e1]))
        if ei == e0:
            raise SegmentationError(f"period starting at sample {e0} has no inhale")
        d_ee = (ei - e0) / fs
        d_ei = (e1 - ei) / fs
        out.append(PeriodTuple(
            float(values[e0]), d_ee, _value_at(values, (e0 + ei) / 2.0),
            float(values[ei]), d_ei, _value_at(values, (ei + e1) / 2.0),
        ))
    if return_indices:
        return out, ee
    return out


def assemble_vectors(periods, n_t: int, stride: int, source_id: str = "", label=None) -> list[BreathingVector]:
    """Sliding windows of ``n_t`` consecutive periods advancing by ``stride``."""
    arr = np.asarray(periods, dtype=np.float64).reshape(-1, 6)
    if stride < 1 or n_t < 1:
        raise ValueError("n_t and stride must be >= 1")
    if len(arr) < n_t:
        raise InsufficientDataError(f"{len(arr)} periods available, {n_t} needed")
    return [BreathingVector(arr[s : s + n_t].copy(), label, source_id) for s in range(0, len(arr) - n_t + 1, stride)]


def _as_array(vectors) -> np.ndarray:
    if isinstance(vectors, np.ndarray):
        return vectors.reshape(len(vectors), -1, 6) if vectors.ndim == 2 else vectors
    if hasattr(vectors, "x"):
        return vectors.x
    return np.stack([np.asarray(v.periods if hasattr(v, "periods") else v, dtype=np.float64) for v in vectors])


def ee_slopes(vectors) -> np.ndarray:
    """Least-squares slope (mm/s) of the end-exhale amplitudes against cumulative period start time."""
    x = _as_array(vectors)
    durations = x[:, :, 1] + x[:, :, 4]
    t = np.concatenate([np.zeros((len(x), 1)), np.cumsum(durations, axis=1)[:, :-1]], axis=1)
    a = x[:, :, 0]
    tc = t - t.mean(axis=1, keepdims=True)
    ac = a - a.mean(axis=1, keepdims=True)
    denom = (tc * tc).sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        slope = (tc * ac).sum(axis=1) / denom
    return np.where(denom > 0, slope, 0.0)


@dataclass(frozen=True)
class SlopeThresholds:
    lower: float
    upper: float
    percentile: float | None = None

    def to_dict(self):
        return {"lower": self.lower, "upper": self.upper, "percentile": self.percentile}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["lower"]), float(d["upper"]), d.get("percentile"))

    def classify(self, slopes) -> np.ndarray:
        slopes = np.asarray(slopes)
        labels = np.full(len(slopes), REGULAR, dtype=np.int64)
        labels[slopes > self.upper] = UP
        labels[slopes < self.lower] = DOWN
        return labels


def label_baseline_shift(vectors, percentile: float = 0.075, thresholds: SlopeThresholds | None = None):
    """Label each vector down / regular / up by its end-exhale slope.

    Without ``thresholds`` they are the ``percentile`` and ``1 - percentile``
    quantiles of this dataset's slopes; pass the returned thresholds back in
    to label a held-out set with the reference thresholds.
    Returns ``(labels, thresholds)``.
    """
    x = _as_array(vectors)
    if len(x) == 0:
        raise InsufficientDataError("cannot label an empty dataset")
    slopes = ee_slopes(x)
    if thresholds is None:
        if not 0.0 < percentile < 0.5:
            raise ValueError("percentile must be in (0, 0.5)")
        lo, hi = np.quantile(slopes, [percentile, 1.0 - percentile])
        thresholds = SlopeThresholds(float(lo), float(hi), percentile)
    return thresholds.classify(slopes), thresholds


@dataclass
class NormStats:
    mean: np.ndarray  # (6,)
    std: np.ndarray  # (6,)

    def apply(self, x):
        return (np.asarray(x) - self.mean) / self.std

    def invert(self, x):
        return np.asarray(x) * self.std + self.mean

    def to_dict(self):
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["std"], dtype=np.float64))


def fit_norm_stats(x) -> NormStats:
    x = _as_array(x)
    if len(x) == 0:
        raise InsufficientDataError("cannot normalize an empty dataset")
    flat = x.reshape(-1, 6)
    mean = flat.mean(axis=0)
    std = flat.std(axis=0)
    bad = np.flatnonzero(std <= 1e-12 * np.maximum(1.0, np.abs(mean)))
    if len(bad):
        raise DegenerateInputError(f"zero-variance channel(s) {bad.tolist()}")
    return NormStats(mean, std)


def normalize_features(x, stats: NormStats | None = None):
    """Per-channel standardization; returns ``(normalized, stats)``."""
    x = _as_array(x)
    stats = fit_norm_stats(x) if stats is None else stats
    return stats.apply(x), stats
