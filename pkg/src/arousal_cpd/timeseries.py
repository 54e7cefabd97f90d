"""Uniform multichannel series and the preprocessing chain.

Everything here is a pure function of its inputs: a ``UniformSeries`` holds a
read-only array and every operation returns a new series.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy import signal

from .errors import (
    IncompatibleSeriesError,
    InvalidFilterError,
    SeriesTooShortError,
    UpsamplingNotSupportedError,
    ZeroVarianceWarning,
)

# Relative scale below which a channel's spread is treated as numerically zero
# (filtered constants carry ~1e-16 ripple that z-scoring would blow up).
_ZERO_STD_RTOL = 1e-10


@dataclass(frozen=True)
class Channel:
    name: str
    unit: str = ""


@dataclass(frozen=True)
class UniformSeries:
    """T x C samples on a uniform grid starting at ``start_time_s``."""

    channels: tuple[Channel, ...]
    data: np.ndarray
    rate_hz: float
    start_time_s: float = 0.0

    def __post_init__(self):
        data = np.array(self.data, dtype=float, copy=True)
        if data.ndim == 1:
            data = data[:, None]
        if data.ndim != 2:
            raise ValueError(f"data must be 2-D (T x C), got shape {data.shape}")
        channels = tuple(
            c if isinstance(c, Channel) else Channel(str(c)) for c in self.channels
        )
        if len(channels) != data.shape[1]:
            raise ValueError(
                f"{len(channels)} channel descriptors for {data.shape[1]} columns"
            )
        names = [c.name for c in channels]
        if len(set(names)) != len(names):
            raise ValueError(f"channel names must be unique: {names}")
        if data.shape[0] < 2 or data.shape[1] < 1:
            raise SeriesTooShortError(
                f"series needs T >= 2 and C >= 1, got shape {data.shape}"
            )
        if not (self.rate_hz > 0 and math.isfinite(self.rate_hz)):
            raise ValueError(f"rate_hz must be positive, got {self.rate_hz}")
        if not np.all(np.isfinite(data)):
            raise ValueError("series contains NaN or Inf")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "channels", channels)
        object.__setattr__(self, "rate_hz", float(self.rate_hz))
        object.__setattr__(self, "start_time_s", float(self.start_time_s))

    @classmethod
    def from_array(cls, data, rate_hz, names=None, units=None, start_time_s=0.0):
        arr = np.asarray(data, dtype=float)
        n_ch = 1 if arr.ndim == 1 else arr.shape[1]
        names = list(names) if names is not None else [f"ch{i}" for i in range(n_ch)]
        units = list(units) if units is not None else [""] * n_ch
        return cls(
            tuple(Channel(n, u) for n, u in zip(names, units)),
            arr,
            rate_hz,
            start_time_s,
        )

    @property
    def n_samples(self) -> int:
        return self.data.shape[0]

    @property
    def n_channels(self) -> int:
        return self.data.shape[1]

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.channels]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.rate_hz

    @property
    def end_time_s(self) -> float:
        return self.start_time_s + self.duration_s

    def times(self) -> np.ndarray:
        return self.start_time_s + np.arange(self.n_samples) / self.rate_hz

    def with_data(self, data, **changes) -> "UniformSeries":
        return replace(self, data=data, **changes)

    def select(self, names: Sequence[str]) -> "UniformSeries":
        idx = [self.names.index(n) for n in names]
        return UniformSeries(
            tuple(self.channels[i] for i in idx),
            self.data[:, idx],
            self.rate_hz,
            self.start_time_s,
        )

    def slice_time(self, t0: float, t1: float) -> "UniformSeries":
        """Samples whose timestamps fall in [t0, t1)."""
        i0 = max(0, math.ceil((t0 - self.start_time_s) * self.rate_hz - 1e-9))
        i1 = min(self.n_samples, math.ceil((t1 - self.start_time_s) * self.rate_hz - 1e-9))
        if i1 - i0 < 2:
            raise IncompatibleSeriesError(
                f"time window [{t0}, {t1}) leaves fewer than 2 samples"
            )
        return self.with_data(
            self.data[i0:i1], start_time_s=self.start_time_s + i0 / self.rate_hz
        )

    def head(self, n: int) -> "UniformSeries":
        return self.with_data(self.data[:n])


def stack(series: Sequence[UniformSeries]) -> UniformSeries:
    """Column-stack series sharing a rate, trimmed to the shortest."""
    rates = {s.rate_hz for s in series}
    if len(rates) != 1:
        raise IncompatibleSeriesError(f"cannot stack series with rates {sorted(rates)}")
    n = min(s.n_samples for s in series)
    return UniformSeries(
        tuple(c for s in series for c in s.channels),
        np.hstack([s.data[:n] for s in series]),
        series[0].rate_hz,
        series[0].start_time_s,
    )


# --------------------------------------------------------------------------- filtering


@dataclass(frozen=True)
class FilterSpec:
    cutoff_hz: float
    order: int = 3
    kind: str = "lowpass"

    def __post_init__(self):
        if not self.cutoff_hz > 0:
            raise InvalidFilterError(f"cutoff must be positive, got {self.cutoff_hz}")
        if self.order < 1:
            raise InvalidFilterError(f"order must be >= 1, got {self.order}")
        if self.kind != "lowpass":
            raise InvalidFilterError(f"only low-pass filters are supported, got {self.kind!r}")


def _zero_phase_design_cutoff(cutoff_hz: float, rate_hz: float, order: int) -> float:
    """Single-pass cutoff giving -3 dB at ``cutoff_hz`` after forward-backward filtering.

    Works in the bilinear-warped domain so the correction is exact for the
    digital filter, not just its analog prototype.
    """
    warped = math.tan(math.pi * cutoff_hz / rate_hz)
    warped /= (math.sqrt(2.0) - 1.0) ** (1.0 / (2 * order))
    return math.atan(warped) * rate_hz / math.pi


def butterworth_lowpass(series: UniformSeries, spec: FilterSpec) -> UniformSeries:
    """Zero-phase Butterworth low-pass applied to every channel.

    The combined forward-backward response is -3 dB at ``spec.cutoff_hz`` and
    falls off at twice the single-pass slope.
    """
    nyquist = series.rate_hz / 2
    if spec.cutoff_hz >= nyquist:
        raise InvalidFilterError(
            f"cutoff {spec.cutoff_hz} Hz must be below Nyquist ({nyquist} Hz)"
        )
    if series.n_samples <= 3 * spec.order:
        raise SeriesTooShortError(
            f"{series.n_samples} samples is too short for an order-{spec.order} filter"
        )
    design_hz = _zero_phase_design_cutoff(spec.cutoff_hz, series.rate_hz, spec.order)
    sos = signal.butter(spec.order, design_hz, btype="lowpass", fs=series.rate_hz, output="sos")
    padlen = min(3 * (2 * len(sos) + 1), series.n_samples - 1)
    out = signal.sosfiltfilt(sos, series.data, axis=0, padlen=padlen)
    return series.with_data(out)


# --------------------------------------------------------------------------- resampling


def decimate(series: UniformSeries, target_rate_hz: float) -> UniformSeries:
    """Resample onto a coarser uniform grid.

    Integer rate ratios keep every r-th sample; other ratios interpolate
    linearly. No anti-alias filtering is done here.
    """
    if target_rate_hz > series.rate_hz * (1 + 1e-12):
        raise UpsamplingNotSupportedError(
            f"target rate {target_rate_hz} Hz exceeds series rate {series.rate_hz} Hz"
        )
    if target_rate_hz <= 0:
        raise ValueError(f"target rate must be positive, got {target_rate_hz}")
    ratio = series.rate_hz / target_rate_hz
    n_out = math.floor(series.n_samples / ratio + 1e-9)
    if n_out < 2:
        raise SeriesTooShortError(
            f"decimating {series.n_samples} samples by {ratio:g} leaves {n_out}"
        )
    if abs(ratio - round(ratio)) < 1e-9:
        out = series.data[:: int(round(ratio))][:n_out]
    else:
        pos = np.arange(n_out) * ratio
        grid = np.arange(series.n_samples)
        out = np.column_stack([np.interp(pos, grid, col) for col in series.data.T])
    return series.with_data(out, rate_hz=float(target_rate_hz))


# --------------------------------------------------------------------------- normalization


def _zscore_columns(data: np.ndarray, names: Sequence[str]) -> np.ndarray:
    mean = data.mean(axis=0)
    std = data.std(axis=0, ddof=1)
    out = np.zeros_like(data)
    for j, name in enumerate(names):
        if std[j] <= _ZERO_STD_RTOL * max(1.0, abs(mean[j])):
            warnings.warn(
                f"channel {name!r} has zero variance; set to 0.0",
                ZeroVarianceWarning,
                stacklevel=3,
            )
            continue
        out[:, j] = (data[:, j] - mean[j]) / std[j]
    return out


def zscore(series: UniformSeries) -> UniformSeries:
    """Per-channel mean 0 / sample std 1. Constant channels become all zeros."""
    return series.with_data(_zscore_columns(series.data, series.names))


def fuse_ground_truth(eda: UniformSeries, rating: UniformSeries) -> UniformSeries:
    """Average of the z-scored EDA and rating channels."""
    if eda.n_channels != 1 or rating.n_channels != 1:
        raise IncompatibleSeriesError("fusion expects two single-channel series")
    if not math.isclose(eda.rate_hz, rating.rate_hz):
        raise IncompatibleSeriesError(
            f"rates differ: {eda.rate_hz} Hz vs {rating.rate_hz} Hz"
        )
    n = min(eda.n_samples, rating.n_samples)
    if n < 2:
        raise IncompatibleSeriesError("series have no usable overlap")
    a = zscore(eda.head(n)).data[:, 0]
    b = zscore(rating.head(n)).data[:, 0]
    return UniformSeries((Channel("fused"),), (a + b) / 2, eda.rate_hz, eda.start_time_s)


# --------------------------------------------------------------------------- missing data


@dataclass(frozen=True)
class MaskSpec:
    target_fraction: float
    max_patch_fraction: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.target_fraction <= 1.0:
            raise ValueError(f"target_fraction must be in [0, 1], got {self.target_fraction}")
        if not 0.0 < self.max_patch_fraction <= 1.0:
            raise ValueError(
                f"max_patch_fraction must be in (0, 1], got {self.max_patch_fraction}"
            )


def draw_mask(n_samples: int, spec: MaskSpec) -> np.ndarray:
    """Boolean mask built from random patches until the target fraction is reached."""
    rng = np.random.default_rng(spec.seed)
    max_len = max(1, math.ceil(spec.max_patch_fraction * n_samples))
    target = spec.target_fraction * n_samples
    mask = np.zeros(n_samples, dtype=bool)
    covered = 0
    while covered < target:
        start = int(rng.integers(0, n_samples))
        length = int(rng.integers(1, max_len + 1))
        mask[start : start + length] = True
        covered = int(mask.sum())
    return mask


def impute_masked(data: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Carry the last unmasked row forward over masked rows.

    A masked prefix is back-filled from the first unmasked row; a fully
    masked array becomes its first original row repeated.
    """
    data = np.asarray(data, dtype=float)
    if not mask.any():
        return data.copy()
    if mask.all():
        return np.broadcast_to(data[:1], data.shape).copy()
    idx = np.where(mask, 0, np.arange(len(mask)))
    np.maximum.accumulate(idx, out=idx)
    first = int(np.argmin(mask))
    idx[:first] = first
    return data[idx]


def mask_and_impute(series: UniformSeries, spec: MaskSpec) -> UniformSeries:
    """Simulate sensor dropouts; the same rows are masked on every channel."""
    mask = draw_mask(series.n_samples, spec)
    return series.with_data(impute_masked(series.data, mask))
