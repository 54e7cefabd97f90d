"""Greedy Gaussian segmentation.

Each segment is modelled as i.i.d. Gaussian with a ridge-regularized
covariance ``S + (lam / w) I``. Breakpoints are inserted one at a time at the
best single split, and after every insertion all breakpoints are cyclically
re-placed between their neighbours until nothing moves.

Two per-segment objectives are available:

``paper``
    -1/2 [ w logdet(S + lam/w I) - lam Tr((S + lam/w I)^-1) ]
``original-ggs``
    -1/2 [ w logdet(S + lam/w I) + lam Tr((S + lam/w I)^-1) ]
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .errors import FactorizationError, SegmentTooShortError
from .timeseries import UniformSeries

OBJECTIVE_VARIANTS = ("paper", "original-ggs")
_JITTER = 1e-9


@dataclass(frozen=True)
class BreakpointSet:
    """Strictly increasing interior indices of a length-``series_len`` series."""

    breakpoints: tuple[int, ...]
    series_len: int

    def __post_init__(self):
        bps = tuple(int(b) for b in self.breakpoints)
        edges = (0, *bps, self.series_len)
        if any(a >= b for a, b in zip(edges, edges[1:])):
            raise ValueError(
                f"breakpoints {bps} are not strictly inside (0, {self.series_len})"
            )
        object.__setattr__(self, "breakpoints", bps)

    def __len__(self):
        return len(self.breakpoints)

    def __iter__(self):
        return iter(self.breakpoints)

    @property
    def edges(self) -> tuple[int, ...]:
        return (0, *self.breakpoints, self.series_len)

    def segments(self) -> list[tuple[int, int]]:
        e = self.edges
        return list(zip(e[:-1], e[1:]))


@dataclass(frozen=True)
class SegmentStats:
    start: int
    end: int
    mean: np.ndarray
    emp_cov: np.ndarray
    reg_cov: np.ndarray

    @property
    def width(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class GgsConfig:
    lam: float = 15.0
    max_breakpoints: int | None = None
    bp_rate_per_hour: float = 15.0
    adjust_max_passes: int = 10
    min_segment_len: int = 2
    objective_variant: str = "paper"

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")
        if self.min_segment_len < 2:
            raise ValueError(f"min_segment_len must be >= 2, got {self.min_segment_len}")
        if self.max_breakpoints is not None and self.max_breakpoints < 0:
            raise ValueError(f"max_breakpoints must be >= 0, got {self.max_breakpoints}")
        if self.adjust_max_passes < 0:
            raise ValueError("adjust_max_passes must be >= 0")
        if self.objective_variant not in OBJECTIVE_VARIANTS:
            raise ValueError(
                f"objective_variant must be one of {OBJECTIVE_VARIANTS}, "
                f"got {self.objective_variant!r}"
            )

    def resolve_max_breakpoints(self, series: UniformSeries) -> int:
        if self.max_breakpoints is not None:
            return self.max_breakpoints
        return max_breakpoints_for(series.duration_s, self.bp_rate_per_hour)


def max_breakpoints_for(duration_s: float, rate_per_hour: float) -> int:
    if duration_s <= 0:
        raise ValueError(f"duration must be positive, got {duration_s}")
    # the epsilon keeps exact products like 15 * 1440 / 3600 = 6 from flooring to 5
    return max(1, math.floor(rate_per_hour * duration_s / 3600.0 + 1e-9))


def _as_array(series) -> np.ndarray:
    x = series.data if isinstance(series, UniformSeries) else np.asarray(series, dtype=float)
    return x[:, None] if x.ndim == 1 else x


def segment_stats(series, start: int, end: int, lam: float, min_segment_len: int = 2) -> SegmentStats:
    """Sample mean, biased (divisor w) covariance and its ridge-regularized form."""
    x = _as_array(series)
    if not 0 <= start < end <= len(x):
        raise ValueError(f"invalid segment [{start}, {end}) for series of length {len(x)}")
    w = end - start
    if w < min_segment_len:
        raise SegmentTooShortError(f"segment [{start}, {end}) shorter than {min_segment_len}")
    seg = x[start:end]
    mean = seg.mean(axis=0)
    dev = seg - mean
    emp = dev.T @ dev / w
    emp = (emp + emp.T) / 2
    reg = emp + (lam / w) * np.eye(x.shape[1])
    return SegmentStats(start, end, mean, emp, reg)


def _logdet_and_trace_inv(cov: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batched log|A| and Tr(A^-1) via Cholesky, retrying failures once with jitter."""
    eye = np.eye(cov.shape[-1])
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        chol = np.empty_like(cov)
        for i, a in enumerate(cov):
            try:
                chol[i] = np.linalg.cholesky(a)
            except np.linalg.LinAlgError:
                try:
                    chol[i] = np.linalg.cholesky(a + _JITTER * eye)
                except np.linalg.LinAlgError as exc:
                    raise FactorizationError(
                        "covariance is not positive definite even after jitter"
                    ) from exc
    diag = np.diagonal(chol, axis1=-2, axis2=-1)
    logdet = 2.0 * np.log(diag).sum(axis=-1)
    chol_inv = np.linalg.solve(chol, np.broadcast_to(eye, chol.shape))
    trace_inv = (chol_inv**2).sum(axis=(-2, -1))
    return logdet, trace_inv


def _terms(widths: np.ndarray, emp_covs: np.ndarray, lam: float, variant: str) -> np.ndarray:
    widths = np.asarray(widths, dtype=float)
    reg = emp_covs + (lam / widths)[:, None, None] * np.eye(emp_covs.shape[-1])
    logdet, trace_inv = _logdet_and_trace_inv(reg)
    sign = -1.0 if variant == "paper" else 1.0
    return -0.5 * (widths * logdet + sign * lam * trace_inv)


def segment_loglik_term(stats: SegmentStats, lam: float, variant: str = "paper") -> float:
    """One summand of the segmentation objective."""
    return float(_terms(np.array([stats.width]), stats.emp_cov[None], lam, variant)[0])


def total_objective(
    series, bps: BreakpointSet, lam: float, variant: str = "paper", min_segment_len: int = 2
) -> float:
    x = _as_array(series)
    return sum(
        segment_loglik_term(segment_stats(x, a, b, lam, min_segment_len), lam, variant)
        for a, b in bps.segments()
    )


class _Segmenter:
    """Split search over one series, with all candidate positions scored at once."""

    def __init__(self, x: np.ndarray, lam: float, variant: str, min_len: int):
        self.x = x
        self.lam = lam
        self.variant = variant
        self.min_len = min_len
        self._cache: dict[tuple[int, int], float] = {}

    def term(self, start: int, end: int) -> float:
        key = (start, end)
        if key not in self._cache:
            emp = segment_stats(self.x, start, end, self.lam, self.min_len).emp_cov
            self._cache[key] = float(_terms(np.array([end - start]), emp[None], self.lam, self.variant)[0])
        return self._cache[key]

    def _prefix_covs(self, seg: np.ndarray, lengths: np.ndarray) -> np.ndarray:
        # biased covariance of seg[:n] for each n in lengths, from running sums
        s1 = np.cumsum(seg, axis=0)[lengths - 1]
        s2 = np.cumsum(seg[:, :, None] * seg[:, None, :], axis=0)[lengths - 1]
        n = lengths[:, None].astype(float)
        mean = s1 / n
        cov = s2 / n[:, :, None] - mean[:, :, None] * mean[:, None, :]
        return (cov + np.swapaxes(cov, -1, -2)) / 2

    def split_values(self, start: int, end: int) -> tuple[np.ndarray, np.ndarray]:
        """Candidate split indices and term(start, s) + term(s, end) for each."""
        m = self.min_len
        cand = np.arange(start + m, end - m + 1)
        if cand.size == 0:
            return cand, np.empty(0)
        seg = self.x[start:end]
        seg = seg - seg.mean(axis=0)
        left_n = cand - start
        right_n = end - cand
        left = self._prefix_covs(seg, left_n)
        right = self._prefix_covs(seg[::-1], right_n)
        values = _terms(left_n, left, self.lam, self.variant) + _terms(
            right_n, right, self.lam, self.variant
        )
        return cand, values

    def best_split(self, start: int, end: int) -> tuple[int, float] | None:
        cand, values = self.split_values(start, end)
        if cand.size == 0:
            return None
        i = int(np.argmax(values))  # first maximum, i.e. smallest index
        return int(cand[i]), float(values[i] - self.term(start, end))


def best_split(
    series, start: int, end: int, lam: float, variant: str = "paper", min_segment_len: int = 2
) -> tuple[int, float] | None:
    """Best single split of ``[start, end)`` and its objective gain.

    Returns ``None`` when no split leaves both parts at least
    ``min_segment_len`` long. The gain may be negative.
    """
    return _Segmenter(_as_array(series), lam, variant, min_segment_len).best_split(start, end)


@dataclass(frozen=True)
class GgsStep:
    breakpoints: BreakpointSet
    objective: float
    gain: float
    adjust_passes: int


def _adjust(seg: _Segmenter, bps: list[int], n: int, max_passes: int) -> int:
    """Move each breakpoint to its best spot between its neighbours; returns passes used."""
    for p in range(max_passes):
        moved = False
        for i in range(len(bps)):
            lo = bps[i - 1] if i > 0 else 0
            hi = bps[i + 1] if i + 1 < len(bps) else n
            cand, values = seg.split_values(lo, hi)
            j = int(np.argmax(values))
            current = values[bps[i] - cand[0]]
            if cand[j] != bps[i] and values[j] > current + 1e-12 * max(1.0, abs(current)):
                bps[i] = int(cand[j])
                moved = True
        if not moved:
            return p + 1
    return max_passes


def ggs_steps(series: UniformSeries, config: GgsConfig) -> Iterator[GgsStep]:
    """Yield the segmentation after each insertion and its adjustment passes."""
    x = _as_array(series)
    n = len(x)
    seg = _Segmenter(x, config.lam, config.objective_variant, config.min_segment_len)
    bps: list[int] = []
    splits: dict[tuple[int, int], tuple[int, float] | None] = {}
    for _ in range(config.resolve_max_breakpoints(series)):
        edges = [0, *bps, n]
        best = None
        for a, b in zip(edges[:-1], edges[1:]):
            if (a, b) not in splits:
                splits[(a, b)] = seg.best_split(a, b)
            cand = splits[(a, b)]
            if cand is not None and (best is None or cand[1] > best[1]):
                best = cand
        if best is None or best[1] <= 0:
            return
        bps.append(best[0])
        bps.sort()
        passes = _adjust(seg, bps, n, config.adjust_max_passes)
        current = BreakpointSet(tuple(bps), n)
        objective = sum(seg.term(a, b) for a, b in current.segments())
        yield GgsStep(current, objective, best[1], passes)


def ggs(series: UniformSeries, config: GgsConfig | None = None) -> BreakpointSet:
    """Run greedy Gaussian segmentation to completion."""
    config = config or GgsConfig()
    n = series.n_samples if isinstance(series, UniformSeries) else len(series)
    result = BreakpointSet((), n)
    for step in ggs_steps(series, config):
        result = step.breakpoints
    return result
