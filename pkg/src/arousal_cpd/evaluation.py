"""Covering metric over interval partitions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .errors import IncompatiblePartitionsError

MAX_SCOPES = ("segments", "derived-intervals")

Interval = tuple[int, int]


@dataclass(frozen=True)
class Partition:
    """Contiguous half-open intervals tiling ``[0, series_len)``."""

    intervals: tuple[Interval, ...]
    series_len: int
    labels: tuple[int, ...] | None = None

    def __post_init__(self):
        intervals = tuple((int(a), int(b)) for a, b in self.intervals)
        if not intervals:
            raise ValueError("a partition needs at least one interval")
        if intervals[0][0] != 0 or intervals[-1][1] != self.series_len:
            raise ValueError(f"intervals must cover [0, {self.series_len})")
        for a, b in intervals:
            if b <= a:
                raise ValueError(f"empty interval [{a}, {b})")
        for (_, b), (c, _) in zip(intervals, intervals[1:]):
            if c != b:
                raise ValueError(f"intervals are not contiguous at {b}")
        labels = None if self.labels is None else tuple(int(v) for v in self.labels)
        if labels is not None and len(labels) != len(intervals):
            raise ValueError(f"{len(labels)} labels for {len(intervals)} intervals")
        object.__setattr__(self, "intervals", intervals)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_breakpoints(cls, breakpoints: Sequence[int], series_len: int, labels=None):
        edges = [0, *breakpoints, series_len]
        return cls(tuple(zip(edges[:-1], edges[1:])), series_len, labels)

    @classmethod
    def whole(cls, series_len: int) -> "Partition":
        return cls(((0, series_len),), series_len)

    @property
    def breakpoints(self) -> tuple[int, ...]:
        return tuple(a for a, _ in self.intervals[1:])

    def __len__(self):
        return len(self.intervals)


@dataclass(frozen=True)
class CoverScore:
    value: float
    per_segment: tuple[tuple[Interval, float, float], ...]  # (interval, best jaccard, weight)

    def __float__(self):
        return self.value


def jaccard(a: Interval, b: Interval) -> float:
    inter = max(0, min(a[1], b[1]) - max(a[0], b[0]))
    union = (a[1] - a[0]) + (b[1] - b[0]) - inter
    return inter / union if union > 0 else 0.0


def _candidates(proposal: Partition, scope: str) -> list[Interval]:
    if scope == "segments":
        return list(proposal.intervals)
    if scope == "derived-intervals":
        edges = [a for a, _ in proposal.intervals] + [proposal.series_len]
        return [(edges[i], edges[j]) for i in range(len(edges)) for j in range(i + 1, len(edges))]
    raise ValueError(f"cover_max_scope must be one of {MAX_SCOPES}, got {scope!r}")


def covering(gt: Partition, proposal: Partition, scope: str = "segments") -> CoverScore:
    """Length-weighted best Jaccard overlap of each ground-truth segment.

    Not symmetric: ``covering(a, b) != covering(b, a)`` in general.
    ``scope="derived-intervals"`` also lets a ground-truth segment match any
    union of consecutive proposed segments.
    """
    if gt.series_len != proposal.series_len:
        raise IncompatiblePartitionsError(
            f"partition lengths differ: {gt.series_len} vs {proposal.series_len}"
        )
    cands = _candidates(proposal, scope)
    n = gt.series_len
    per_segment = []
    total = 0.0
    for a in gt.intervals:
        # only candidates overlapping ``a`` can score above zero
        best = max((jaccard(a, c) for c in cands if c[0] < a[1] and c[1] > a[0]), default=0.0)
        weight = (a[1] - a[0]) / n
        per_segment.append((a, best, weight))
        total += (a[1] - a[0]) * best
    return CoverScore(total / n, tuple(per_segment))


def baseline_covering(gt: Partition) -> float:
    """Cover achieved by proposing the whole series as one segment."""
    return covering(gt, Partition.whole(gt.series_len)).value
