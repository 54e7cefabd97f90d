"""Drive CSV ingestion and result/report files.

Drive files are CSV with a ``time_s`` column followed by one column per
channel. An optional JSON sidecar with the same stem declares the sampling
rate (one number, or one per channel) and units::

    {"rate_hz": {"hr": 4.0, "eda": 4.0, "sr": 1.0}, "units": {"hr": "bpm"}}

Every channel is linearly resampled onto a uniform grid at its declared rate,
starting at the first timestamp.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from pathlib import Path
from typing import Iterable, Mapping

import jsonschema
import numpy as np

from .errors import IngestionError, MissingValueWarning
from .evaluation import Partition
from .experiments import Drive, PipelineConfig, RunResult, Skipped, Sweep, summarize
from .ggs import BreakpointSet
from .timeseries import Channel, UniformSeries

TIME_COLUMN = "time_s"

SIDECAR_SCHEMA = {
    "type": "object",
    "properties": {
        "rate_hz": {
            "oneOf": [
                {"type": "number", "exclusiveMinimum": 0},
                {"type": "object", "additionalProperties": {"type": "number", "exclusiveMinimum": 0}},
            ]
        },
        "units": {"type": "object", "additionalProperties": {"type": "string"}},
        "drive_id": {"type": "string"},
    },
    "additionalProperties": True,
}

_PARTITION_BODY = {
    "series_len": {"type": "integer", "minimum": 1},
    "rate_hz": {"type": "number", "exclusiveMinimum": 0},
    "start_time_s": {"type": "number"},
    "breakpoints": {"type": "array", "items": {"type": "integer"}},
    "breakpoint_times_s": {"type": "array", "items": {"type": "number"}},
}

BREAKPOINTS_SCHEMA = {
    "type": "object",
    "required": ["schema", "series_len", "rate_hz", "start_time_s", "breakpoints", "breakpoint_times_s"],
    "properties": {
        "schema": {"const": "arousal_cpd.breakpoints/1"},
        **_PARTITION_BODY,
        "channels": {"type": "array", "items": {"type": "string"}},
        "lam": {"type": "number"},
        "max_breakpoints": {"type": "integer"},
        "objective": {"type": "number"},
    },
}

PARTITION_SCHEMA = {
    "type": "object",
    "required": ["schema", "series_len", "rate_hz", "start_time_s", "breakpoints",
                 "breakpoint_times_s", "intervals", "labels"],
    "properties": {
        "schema": {"const": "arousal_cpd.partition/1"},
        **_PARTITION_BODY,
        "intervals": {
            "type": "array",
            "items": {"type": "array", "items": {"type": "integer"}, "minItems": 2, "maxItems": 2},
        },
        "labels": {"type": ["array", "null"], "items": {"type": "integer"}},
    },
}

_RECORD_PARTITION = {
    "type": "object",
    "required": ["breakpoints", "breakpoint_times_s", "intervals", "labels"],
}

RESULTS_SCHEMA = {
    "type": "object",
    "required": ["schema", "dataset", "config", "drives", "summary"],
    "properties": {
        "schema": {"const": "arousal_cpd.results/1"},
        "dataset": {"type": "string"},
        "config": {"type": "object"},
        "drives": {
            "type": "array",
            "items": {
                "oneOf": [
                    {
                        "type": "object",
                        "required": ["drive_id", "status", "series_len", "rate_hz", "start_time_s",
                                     "gt", "proposal", "cover", "baseline"],
                        "properties": {
                            "status": {"const": "ok"},
                            "cover": {"type": "number", "minimum": 0, "maximum": 1},
                            "baseline": {"type": "number", "minimum": 0, "maximum": 1},
                            "gt": _RECORD_PARTITION,
                            "proposal": _RECORD_PARTITION,
                        },
                    },
                    {
                        "type": "object",
                        "required": ["drive_id", "status", "reason"],
                        "properties": {"status": {"const": "skipped"}},
                    },
                ]
            },
        },
        "summary": {"type": "object", "required": ["n", "mean", "std", "baseline_mean"]},
    },
}

SUMMARY_COLUMNS = ("dataset", "ground_truth", "signal", "n", "n_skipped", "mean", "std", "baseline_mean")


# --------------------------------------------------------------------------- ingestion


def _parse_cell(text: str, line: int, column: str) -> float:
    text = text.strip()
    if text == "":
        return math.nan
    try:
        value = float(text)
    except ValueError:
        raise IngestionError(f"cannot parse {text!r} in column {column!r}", line) from None
    if not math.isfinite(value):
        raise IngestionError(f"non-finite value {text!r} in column {column!r}", line)
    return value


def read_sidecar(path) -> dict:
    with open(path) as fh:
        meta = json.load(fh)
    try:
        jsonschema.validate(meta, SIDECAR_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise IngestionError(f"invalid sidecar {path}: {exc.message}") from None
    return meta


def _forward_fill(values: np.ndarray, name: str) -> np.ndarray:
    missing = np.isnan(values)
    if not missing.any():
        return values
    if missing.all():
        raise IngestionError(f"column {name!r} has no values")
    warnings.warn(
        f"column {name!r}: {int(missing.sum())} empty cells forward-filled",
        MissingValueWarning,
        stacklevel=3,
    )
    idx = np.where(missing, 0, np.arange(len(values)))
    np.maximum.accumulate(idx, out=idx)
    first = int(np.argmin(missing))
    idx[:first] = first
    return values[idx]


def ingest(path, sidecar=None) -> dict[str, UniformSeries]:
    """Read a drive CSV into one uniform series per channel."""
    path = Path(path)
    if sidecar is None and path.with_suffix(".json").exists():
        sidecar = path.with_suffix(".json")
    meta = read_sidecar(sidecar) if sidecar is not None else {}

    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise IngestionError("file is empty", 1) from None
        if not header or header[0] != TIME_COLUMN or len(header) < 2:
            raise IngestionError(f"header must start with {TIME_COLUMN!r} followed by channels", 1)
        if len(set(header)) != len(header):
            raise IngestionError("duplicate column names", 1)
        names = header[1:]
        times: list[float] = []
        rows: list[list[float]] = []
        for line, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise IngestionError(f"expected {len(header)} cells, got {len(row)}", line)
            t = _parse_cell(row[0], line, TIME_COLUMN)
            if math.isnan(t):
                raise IngestionError("missing timestamp", line)
            if times and t < times[-1]:
                raise IngestionError(f"time goes backwards ({t} after {times[-1]})", line)
            if times and t == times[-1]:
                continue  # duplicate timestamp: keep the first row
            times.append(t)
            rows.append([_parse_cell(c, line, n) for c, n in zip(row[1:], names)])
    if len(times) < 2:
        raise IngestionError("need at least two samples")

    t = np.array(times)
    values = np.array(rows, dtype=float)
    rates = meta.get("rate_hz")
    if rates is None:
        rates = 1.0 / float(np.median(np.diff(t)))
    units = meta.get("units", {})
    out = {}
    for j, name in enumerate(names):
        rate = rates.get(name) if isinstance(rates, Mapping) else rates
        if rate is None:
            raise IngestionError(f"sidecar declares no rate for channel {name!r}")
        col = _forward_fill(values[:, j], name)
        n = math.floor((t[-1] - t[0]) * rate + 1e-9) + 1
        grid = t[0] + np.arange(n) / rate
        out[name] = UniformSeries(
            (Channel(name, units.get(name, "")),), np.interp(grid, t, col), rate, float(t[0])
        )
    return out


def load_drive(path, sidecar=None) -> Drive:
    path = Path(path)
    channels = ingest(path, sidecar)
    meta_path = sidecar or path.with_suffix(".json")
    drive_id = path.stem
    if Path(meta_path).exists():
        drive_id = read_sidecar(meta_path).get("drive_id", drive_id)
    return Drive(drive_id, channels)


def load_dataset(directory) -> list[Drive]:
    files = sorted(Path(directory).glob("*.csv"))
    if not files:
        raise IngestionError(f"no drive CSV files in {directory}")
    return [load_drive(f) for f in files]


# --------------------------------------------------------------------------- writing


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value)) if math.isfinite(value) else ""
    return str(value)


def write_series_csv(path, series: UniformSeries | Mapping[str, UniformSeries], drive_id=None) -> None:
    """Write channels sharing one grid as a drive CSV plus its sidecar."""
    if isinstance(series, UniformSeries):
        parts = [series]
    else:
        parts = list(series.values())
    rate, start = parts[0].rate_hz, parts[0].start_time_s
    if any(p.rate_hz != rate or p.start_time_s != start for p in parts):
        raise ValueError("all channels must share rate and start time to share a CSV")
    n = min(p.n_samples for p in parts)
    channels = [c for p in parts for c in p.channels]
    data = np.hstack([p.data[:n] for p in parts])
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([TIME_COLUMN, *(c.name for c in channels)])
        for i in range(n):
            writer.writerow([_fmt(start + i / rate), *(_fmt(float(v)) for v in data[i])])
    meta = {"rate_hz": rate, "units": {c.name: c.unit for c in channels}}
    if drive_id is not None:
        meta["drive_id"] = drive_id
    write_json(path.with_suffix(".json"), meta)


def _jsonable(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def read_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def breakpoints_record(bps: BreakpointSet, series: UniformSeries, **extra) -> dict:
    return {
        "schema": "arousal_cpd.breakpoints/1",
        "series_len": bps.series_len,
        "rate_hz": series.rate_hz,
        "start_time_s": series.start_time_s,
        "channels": series.names,
        "breakpoints": list(bps.breakpoints),
        "breakpoint_times_s": [b / series.rate_hz + series.start_time_s for b in bps],
        **extra,
    }


def partition_record(p: Partition, rate_hz: float, start_time_s: float) -> dict:
    return {
        "schema": "arousal_cpd.partition/1",
        "series_len": p.series_len,
        "rate_hz": rate_hz,
        "start_time_s": start_time_s,
        "breakpoints": list(p.breakpoints),
        "breakpoint_times_s": [b / rate_hz + start_time_s for b in p.breakpoints],
        "intervals": [list(iv) for iv in p.intervals],
        "labels": None if p.labels is None else list(p.labels),
    }


def partition_from_record(rec: Mapping) -> Partition:
    """Accepts either a partition file or a breakpoints file."""
    if "intervals" in rec:
        return Partition(tuple(tuple(iv) for iv in rec["intervals"]), rec["series_len"], rec.get("labels"))
    return Partition.from_breakpoints(rec["breakpoints"], rec["series_len"])


def results_document(dataset: str, config: PipelineConfig, results: Iterable) -> dict:
    results = list(results)
    ok = [r for r in results if isinstance(r, RunResult)]
    stats = summarize([r.cover for r in ok])
    return {
        "schema": "arousal_cpd.results/1",
        "dataset": dataset,
        "config": config.to_dict(),
        "drives": [r.to_record() for r in results],
        "summary": {
            "n": stats["n"],
            "n_skipped": len(results) - len(ok),
            "mean": stats["mean"],
            "std": stats["std"],
            "baseline_mean": summarize([r.baseline for r in ok])["mean"],
        },
    }


def summary_row(doc: Mapping) -> dict:
    cfg = doc["config"]
    s = doc["summary"]
    return {
        "dataset": doc["dataset"],
        "ground_truth": cfg["ground_truth"],
        "signal": "+".join(cfg["monitored"]),
        "n": s["n"],
        "n_skipped": s["n_skipped"],
        "mean": s["mean"],
        "std": s["std"],
        "baseline_mean": s["baseline_mean"],
    }


def write_table_csv(path, rows: Iterable[Mapping], columns) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in columns])


def write_sweep_csv(path, sweep: Sweep) -> None:
    write_table_csv(path, sweep.table(), Sweep.COLUMNS)


def skipped_reasons(results) -> list[str]:
    return [f"{r.drive_id}: {r.reason}" for r in results if isinstance(r, Skipped)]
