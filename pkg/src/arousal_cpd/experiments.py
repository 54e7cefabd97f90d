"""End-to-end pipeline, synthetic drives and the parameter sweeps."""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from .clustering import FEATURE_MODES, ClusterConfig, cluster_partition
from .errors import ArousalCPDError, ConfigError, DriveTooShortError, InvalidKError, SeriesTooShortError
from .evaluation import MAX_SCOPES, Partition, baseline_covering, covering
from .ggs import OBJECTIVE_VARIANTS, BreakpointSet, GgsConfig, ggs, max_breakpoints_for
from .timeseries import (
    Channel,
    FilterSpec,
    MaskSpec,
    UniformSeries,
    butterworth_lowpass,
    decimate,
    fuse_ground_truth,
    mask_and_impute,
    stack,
    zscore,
)

MONITORED_CHANNELS = ("hr", "br")
GROUND_TRUTHS = {"eda": ("eda",), "sr": ("sr",), "eda+sr": ("eda", "sr")}
LABEL_SOURCES = ("self", "ground-truth")


# --------------------------------------------------------------------------- config


@dataclass(frozen=True)
class PipelineConfig:
    monitored: tuple[str, ...] = ("hr",)
    ground_truth: str = "eda"
    lp_hz: float = 0.05
    gt_hz: float | None = 0.01  # None: ground truth gets no extra low-pass
    filter_order: int = 3
    common_rate_hz: float = 0.5
    lam: float = 15.0
    bp_rate_per_hour: float = 15.0
    k: int = 3
    label_source: str = "self"
    cover_max_scope: str = "segments"
    objective_variant: str = "paper"
    feature_mode: str = "mean"
    restarts: int = 8
    max_iters: int = 100
    adjust_max_passes: int = 10
    min_segment_len: int = 2
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "monitored", tuple(self.monitored))
        checks = [
            (self.monitored and set(self.monitored) <= set(MONITORED_CHANNELS),
             f"monitored must be a non-empty subset of {MONITORED_CHANNELS}"),
            (len(set(self.monitored)) == len(self.monitored), "monitored has duplicates"),
            (self.ground_truth in GROUND_TRUTHS, f"ground_truth must be one of {tuple(GROUND_TRUTHS)}"),
            (self.label_source in LABEL_SOURCES, f"label_source must be one of {LABEL_SOURCES}"),
            (self.cover_max_scope in MAX_SCOPES, f"cover_max_scope must be one of {MAX_SCOPES}"),
            (self.objective_variant in OBJECTIVE_VARIANTS,
             f"objective_variant must be one of {OBJECTIVE_VARIANTS}"),
            (self.feature_mode in FEATURE_MODES, f"feature_mode must be one of {FEATURE_MODES}"),
            (self.lp_hz > 0 and (self.gt_hz is None or self.gt_hz > 0) and self.common_rate_hz > 0,
             "rates must be positive"),
            (self.lam >= 0, "lam must be >= 0"),
            (self.k >= 1, "k must be >= 1"),
            (self.workers >= 1, "workers must be >= 1"),
            (self.min_segment_len >= 2, "min_segment_len must be >= 2"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)

    @classmethod
    def from_dict(cls, data: Mapping) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        out = asdict(self)
        out["monitored"] = list(self.monitored)
        return out

    @property
    def signal_name(self) -> str:
        return "+".join(self.monitored)

    def ggs_config(self) -> GgsConfig:
        return GgsConfig(
            lam=self.lam,
            bp_rate_per_hour=self.bp_rate_per_hour,
            adjust_max_passes=self.adjust_max_passes,
            min_segment_len=self.min_segment_len,
            objective_variant=self.objective_variant,
        )

    def cluster_config(self, k: int | None = None) -> ClusterConfig:
        return ClusterConfig(
            k=self.k if k is None else k,
            seed=self.seed,
            max_iters=self.max_iters,
            restarts=self.restarts,
            feature_mode=self.feature_mode,
        )


# --------------------------------------------------------------------------- data


@dataclass(frozen=True)
class Drive:
    drive_id: str
    channels: Mapping[str, UniformSeries]

    def __getitem__(self, name: str) -> UniformSeries:
        return self.channels[name]

    def has(self, names) -> bool:
        return all(n in self.channels for n in names)


@dataclass(frozen=True)
class SynthSpec:
    n_segments: int = 3
    length_range: tuple[int, int] = (60, 60)
    mean_range: tuple[float, float] = (-5.0, 5.0)
    std_range: tuple[float, float] = (0.5, 1.0)
    n_channels: int = 1
    rate_hz: float = 1.0
    seed: int = 0
    min_segment_len: int = 2

    def __post_init__(self):
        if self.n_segments < 1:
            raise ValueError("n_segments must be >= 1")
        if self.length_range[0] < 2 * self.min_segment_len or self.length_range[1] < self.length_range[0]:
            raise ValueError(f"invalid length_range {self.length_range}")


def synth_piecewise_gaussian(spec: SynthSpec) -> tuple[UniformSeries, BreakpointSet]:
    """Concatenated i.i.d. Gaussian segments and their true breakpoints."""
    rng = np.random.default_rng(spec.seed)
    lo, hi = spec.length_range
    lengths = rng.integers(lo, hi + 1, size=spec.n_segments)
    means = rng.uniform(*spec.mean_range, size=(spec.n_segments, spec.n_channels))
    stds = rng.uniform(*spec.std_range, size=spec.n_segments)
    parts = [
        mu + sd * rng.standard_normal((n, spec.n_channels))
        for n, mu, sd in zip(lengths, means, stds)
    ]
    series = UniformSeries.from_array(np.vstack(parts), spec.rate_hz)
    bps = BreakpointSet(tuple(np.cumsum(lengths)[:-1]), int(lengths.sum()))
    return series, bps


@dataclass(frozen=True)
class ChannelModel:
    """Per-level mean of a synthetic channel: ``base + level * gap``."""

    unit: str
    base: float
    gap: float


SYNTH_CHANNELS = {
    "hr": ChannelModel("bpm", 70.0, 12.0),
    "br": ChannelModel("breaths/min", 14.0, 4.0),
    "eda": ChannelModel("uS", 2.0, 3.0),
    "sr": ChannelModel("rating", 10.0, 40.0),
}


@dataclass(frozen=True)
class DriveSuiteSpec:
    """Synthetic drives whose channels all switch arousal level at shared times.

    ``noise`` and ``nuisance`` are in units of each channel's level gap.
    ``nuisance`` adds independent within-level sub-steps per channel, which
    GGS picks up and clustering has to prune away.
    """

    n_drives: int = 20
    duration_s: float = 3600.0
    rate_hz: float = 2.0
    n_levels: int = 3
    segment_s: tuple[float, float] = (360.0, 900.0)
    noise: float = 0.1
    nuisance: float = 0.1
    nuisance_s: tuple[float, float] = (60.0, 240.0)
    channels: tuple[str, ...] = ("hr", "br", "eda", "sr")
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(self.channels))
        object.__setattr__(self, "segment_s", tuple(self.segment_s))
        object.__setattr__(self, "nuisance_s", tuple(self.nuisance_s))
        unknown = set(self.channels) - set(SYNTH_CHANNELS)
        if unknown:
            raise ValueError(f"no synthetic model for channels {sorted(unknown)}")
        if self.n_drives < 1 or self.n_levels < 1:
            raise ValueError("n_drives and n_levels must be positive")
        if not 0 < self.segment_s[0] <= self.segment_s[1]:
            raise ValueError(f"invalid segment_s {self.segment_s}")

    @classmethod
    def from_dict(cls, data: Mapping) -> "DriveSuiteSpec":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown synth spec keys: {unknown}")
        return cls(**data)

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


SUITES = {
    "default": DriveSuiteSpec(),
    "noisy": DriveSuiteSpec(noise=1.0, nuisance=0.3, seed=1),
}


def _segment_edges(rng, total: int, lo: int, hi: int) -> list[int]:
    edges = [0]
    while total - edges[-1] > hi:
        edges.append(edges[-1] + int(rng.integers(lo, hi + 1)))
    if total - edges[-1] < lo and len(edges) > 1:
        edges.pop()
    edges.append(total)
    return edges


def _level_sequence(rng, n_segments: int, n_levels: int) -> np.ndarray:
    for _ in range(1000):
        levels = [int(rng.integers(n_levels))]
        for _ in range(n_segments - 1):
            choices = [v for v in range(n_levels) if v != levels[-1]] or [levels[-1]]
            levels.append(int(rng.choice(choices)))
        if len(set(levels)) == min(n_levels, n_segments):
            break
    return np.array(levels)


def synth_drive(spec: DriveSuiteSpec, index: int) -> tuple[Drive, list[float]]:
    """One synthetic drive and its true change-point times in seconds."""
    rng = np.random.default_rng([spec.seed, index])
    n = int(round(spec.duration_s * spec.rate_hz))
    lo, hi = (max(2, int(round(s * spec.rate_hz))) for s in spec.segment_s)
    edges = _segment_edges(rng, n, lo, hi)
    levels = _level_sequence(rng, len(edges) - 1, spec.n_levels)
    level_at = np.repeat(levels, np.diff(edges)).astype(float)
    nlo, nhi = (max(1, int(round(s * spec.rate_hz))) for s in spec.nuisance_s)
    channels = {}
    for name in spec.channels:
        model = SYNTH_CHANNELS[name]
        wiggle = np.zeros(n)
        sub = _segment_edges(rng, n, nlo, nhi)
        for a, b in zip(sub[:-1], sub[1:]):
            wiggle[a:b] = rng.uniform(-1.0, 1.0)
        values = model.base + model.gap * (
            level_at + spec.nuisance * wiggle + spec.noise * rng.standard_normal(n)
        )
        channels[name] = UniformSeries((Channel(name, model.unit),), values, spec.rate_hz)
    change_times = [e / spec.rate_hz for e in edges[1:-1]]
    return Drive(f"synth_{index:03d}", channels), change_times


def synth_dataset(spec: DriveSuiteSpec | str = "default") -> list[Drive]:
    if isinstance(spec, str):
        spec = SUITES[spec]
    return [synth_drive(spec, i)[0] for i in range(spec.n_drives)]


# --------------------------------------------------------------------------- pipeline


@dataclass(frozen=True)
class RunResult:
    drive_id: str
    gt: Partition
    proposal: Partition
    cover: float
    baseline: float
    config: dict
    rate_hz: float
    start_time_s: float
    timings: dict = field(default_factory=dict, compare=False)

    def breakpoint_times(self, partition: Partition) -> list[float]:
        return [b / self.rate_hz + self.start_time_s for b in partition.breakpoints]

    def to_record(self) -> dict:
        """JSON-ready record; timings are left out so files stay reproducible."""
        return {
            "drive_id": self.drive_id,
            "status": "ok",
            "series_len": self.gt.series_len,
            "rate_hz": self.rate_hz,
            "start_time_s": self.start_time_s,
            "gt": _partition_record(self.gt, self.breakpoint_times(self.gt)),
            "proposal": _partition_record(self.proposal, self.breakpoint_times(self.proposal)),
            "cover": self.cover,
            "baseline": self.baseline,
        }


@dataclass(frozen=True)
class Skipped:
    drive_id: str
    reason: str

    def to_record(self) -> dict:
        return {"drive_id": self.drive_id, "status": "skipped", "reason": self.reason}


def _partition_record(p: Partition, times: list[float]) -> dict:
    return {
        "breakpoints": list(p.breakpoints),
        "breakpoint_times_s": times,
        "intervals": [list(iv) for iv in p.intervals],
        "labels": None if p.labels is None else list(p.labels),
    }


def _as_list(series) -> list[UniformSeries]:
    return [series] if isinstance(series, UniformSeries) else list(series)


def _trim_to_overlap(series: list[UniformSeries]) -> list[UniformSeries]:
    t0 = max(s.start_time_s for s in series)
    t1 = min(s.end_time_s for s in series)
    if t1 <= t0:
        raise DriveTooShortError("channels do not overlap in time")
    return [s.slice_time(t0, t1) for s in series]


def preprocess(series: UniformSeries, config: PipelineConfig, ground_truth: bool = False) -> UniformSeries:
    """Low-pass, decimate to the common rate, and for ground truth low-pass again."""
    out = butterworth_lowpass(series, FilterSpec(config.lp_hz, config.filter_order))
    out = decimate(out, config.common_rate_hz)
    if ground_truth and config.gt_hz is not None:
        out = butterworth_lowpass(out, FilterSpec(config.gt_hz, config.filter_order))
    return out


def run_drive(gt_series, monitored_series, config: PipelineConfig, drive_id: str = "") -> RunResult:
    """Score the monitored channels' change points against the ground truth.

    ``gt_series`` is one raw series, or two (EDA then rating) to be fused.
    ``monitored_series`` is one raw series per monitored channel.
    """
    t_start = time.perf_counter()
    gt_raw, mon_raw = _as_list(gt_series), _as_list(monitored_series)
    if len(gt_raw) not in (1, 2):
        raise ValueError("ground truth takes one series, or two to fuse")
    trimmed = _trim_to_overlap(gt_raw + mon_raw)
    try:
        gt_pre = [preprocess(s, config, ground_truth=True) for s in trimmed[: len(gt_raw)]]
        mon_pre = [preprocess(s, config) for s in trimmed[len(gt_raw) :]]
    except SeriesTooShortError as exc:
        raise DriveTooShortError(f"drive too short to preprocess: {exc}") from exc
    n = min(s.n_samples for s in gt_pre + mon_pre)
    if n < 2 * config.min_segment_len:
        raise DriveTooShortError(
            f"only {n} samples at {config.common_rate_hz} Hz; need {2 * config.min_segment_len}"
        )
    gt_pre = [s.head(n) for s in gt_pre]
    mon_pre = [s.head(n) for s in mon_pre]
    gt = fuse_ground_truth(*gt_pre) if len(gt_pre) == 2 else zscore(gt_pre[0])
    monitored = zscore(stack(mon_pre))
    t_pre = time.perf_counter()

    ggs_cfg = replace(
        config.ggs_config(),
        max_breakpoints=max_breakpoints_for(n / config.common_rate_hz, config.bp_rate_per_hour),
    )
    gt_bps = ggs(gt, ggs_cfg)
    mon_bps = ggs(monitored, ggs_cfg)
    t_seg = time.perf_counter()

    gt_part = cluster_partition(gt, gt_bps, config.cluster_config())
    label_series = monitored if config.label_source == "self" else gt
    # k >= #segments already keeps every proposal breakpoint; clamp instead of failing
    k_prop = min(config.k, len(mon_bps) + 1)
    proposal = cluster_partition(label_series, mon_bps, config.cluster_config(k_prop))
    t_clu = time.perf_counter()

    cover = covering(gt_part, proposal, config.cover_max_scope).value
    baseline = baseline_covering(gt_part)
    return RunResult(
        drive_id=drive_id,
        gt=gt_part,
        proposal=proposal,
        cover=cover,
        baseline=baseline,
        config=config.to_dict(),
        rate_hz=config.common_rate_hz,
        start_time_s=gt.start_time_s,
        timings={
            "preprocess_s": t_pre - t_start,
            "segment_s": t_seg - t_pre,
            "cluster_s": t_clu - t_seg,
            "evaluate_s": time.perf_counter() - t_clu,
        },
    )


MonitoredTransform = Callable[[UniformSeries, int, int], UniformSeries]


def _run_one(args) -> RunResult | Skipped:
    index, drive, config, transform = args
    gt_names = GROUND_TRUTHS[config.ground_truth]
    if not drive.has(gt_names + config.monitored):
        missing = [c for c in gt_names + config.monitored if c not in drive.channels]
        return Skipped(drive.drive_id, f"missing channels {missing}")
    monitored = [drive[c] for c in config.monitored]
    if transform is not None:
        monitored = [transform(s, index, j) for j, s in enumerate(monitored)]
    try:
        return run_drive([drive[c] for c in gt_names], monitored, config, drive.drive_id)
    except (InvalidKError, DriveTooShortError) as exc:
        return Skipped(drive.drive_id, f"{type(exc).__name__}: {exc}")


def run_dataset(
    dataset: Sequence[Drive],
    config: PipelineConfig,
    transform: MonitoredTransform | None = None,
) -> list[RunResult | Skipped]:
    """Run every drive; results come back in dataset order whatever the worker count.

    ``transform(series, drive_index, channel_index)`` is applied to each raw
    monitored series first (used for missing-data simulation).
    """
    jobs = [(i, d, config, transform) for i, d in enumerate(dataset)]
    if config.workers == 1 or len(jobs) < 2:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=config.workers) as pool:
        return list(pool.map(_run_one, jobs))


# --------------------------------------------------------------------------- aggregation


def summarize(values: Sequence[float]) -> dict:
    """n, mean, sample std and boxplot quantiles; NaN-free for n >= 1."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return {"n": 0, "mean": math.nan, "std": math.nan, "min": math.nan,
                "q1": math.nan, "median": math.nan, "q3": math.nan, "max": math.nan}
    q = np.percentile(v, [0, 25, 50, 75, 100])
    return {
        "n": int(v.size),
        "mean": float(v.mean()),
        "std": float(v.std(ddof=1)) if v.size > 1 else 0.0,
        "min": float(q[0]),
        "q1": float(q[1]),
        "median": float(q[2]),
        "q3": float(q[3]),
        "max": float(q[4]),
    }


@dataclass(frozen=True)
class SweepRow:
    value: float
    stats: dict
    baseline: dict
    n_skipped: int


@dataclass
class Sweep:
    parameter: str
    rows: list[SweepRow]
    runs: dict = field(default_factory=dict)  # value -> list[RunResult | Skipped]

    def row(self, value) -> SweepRow:
        for r in self.rows:
            if r.value == value:
                return r
        raise KeyError(value)

    def means(self) -> dict:
        return {r.value: r.stats["mean"] for r in self.rows}

    COLUMNS = ("parameter", "value", "n", "n_skipped", "mean", "std", "min", "q1",
               "median", "q3", "max", "baseline_mean")

    def table(self) -> list[dict]:
        out = []
        for r in self.rows:
            rec = {"parameter": self.parameter, "value": r.value, "n_skipped": r.n_skipped}
            rec.update(r.stats)
            rec["baseline_mean"] = r.baseline["mean"]
            out.append({c: rec[c] for c in self.COLUMNS})
        return out


def _row(value, results: list) -> SweepRow:
    ok = [r for r in results if isinstance(r, RunResult)]
    return SweepRow(
        value,
        summarize([r.cover for r in ok]),
        summarize([r.baseline for r in ok]),
        len(results) - len(ok),
    )


def lambda_sweep(dataset, config: PipelineConfig, lambdas=(1.0, 5.0, 15.0)) -> Sweep:
    sweep = Sweep("lambda", [])
    for lam in lambdas:
        results = run_dataset(dataset, replace(config, lam=float(lam)))
        sweep.runs[float(lam)] = results
        sweep.rows.append(_row(float(lam), results))
    return sweep


DEFAULT_FRACTIONS = tuple(round(0.1 * i, 1) for i in range(11))


@dataclass(frozen=True)
class MissingDataMask:
    """Picklable monitored-series transform drawing one mask per drive and channel."""

    fraction: float
    repetition: int
    seed: int
    max_patch_fraction: float = 0.01

    def __call__(self, series: UniformSeries, drive_index: int, channel_index: int) -> UniformSeries:
        seq = np.random.SeedSequence([self.seed, drive_index, channel_index, self.repetition])
        spec = MaskSpec(self.fraction, self.max_patch_fraction, int(seq.generate_state(1)[0]))
        return mask_and_impute(series, spec)


def missing_data_sweep(
    dataset,
    config: PipelineConfig,
    fractions=DEFAULT_FRACTIONS,
    repetitions: int = 20,
    max_patch_fraction: float = 0.01,
) -> Sweep:
    """Mask the raw monitored signals and rerun.

    Each repetition draws fresh masks; fraction 0 is deterministic and run once.
    """
    sweep = Sweep("missing_fraction", [])
    for f in fractions:
        f = float(f)
        reps = 1 if f == 0 else repetitions
        results = []
        for rep in range(reps):
            transform = None if f == 0 else MissingDataMask(f, rep, config.seed, max_patch_fraction)
            results += run_dataset(dataset, config, transform)
        sweep.runs[f] = results
        sweep.rows.append(_row(f, results))
    return sweep


def cluster_sweep(dataset, config: PipelineConfig, ks=(2, 3, 4, 5)) -> Sweep:
    sweep = Sweep("k", [])
    for k in ks:
        results = run_dataset(dataset, replace(config, k=int(k)))
        sweep.runs[int(k)] = results
        sweep.rows.append(_row(int(k), results))
    return sweep
