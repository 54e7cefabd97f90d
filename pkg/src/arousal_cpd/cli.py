"""Command-line entry point: ``arousal-cpd <command> ...``.

Exit codes: 0 success, 1 runtime failure, 2 usage or config error. Failures
print a one-line JSON object ``{"error": ..., "message": ...}`` on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import io
from .clustering import ClusterConfig, cluster_partition
from .errors import ArousalCPDError, ConfigError
from .evaluation import MAX_SCOPES, baseline_covering, covering
from .experiments import (
    SUITES,
    DriveSuiteSpec,
    PipelineConfig,
    cluster_sweep,
    lambda_sweep,
    missing_data_sweep,
    preprocess,
    run_dataset,
    synth_dataset,
    synth_drive,
)
from .ggs import OBJECTIVE_VARIANTS, BreakpointSet, GgsConfig, ggs, total_objective
from .timeseries import stack, zscore

EXIT_RUNTIME = 1
EXIT_USAGE = 2

GT_CHANNELS = ("eda", "sr")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _load_config(path, seed=None) -> PipelineConfig:
    data = {}
    if path is not None:
        try:
            data = io.read_json(path)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
    cfg = PipelineConfig.from_dict(data)
    return cfg if seed is None else replace(cfg, seed=seed)


def _load_series(path, channels=None):
    series = io.ingest(path)
    names = channels.split(",") if channels else list(series)
    missing = [n for n in names if n not in series]
    if missing:
        raise ConfigError(f"channels {missing} not in {path}")
    return stack([series[n] for n in names])


def cmd_preprocess(args):
    cfg = _load_config(args.config)
    channels = io.ingest(args.input)
    processed = [
        zscore(preprocess(s, cfg, ground_truth=name in GT_CHANNELS)) for name, s in channels.items()
    ]
    io.write_series_csv(args.output, stack(processed))


def cmd_segment(args):
    series = _load_series(args.input, args.channels)
    cfg = GgsConfig(
        lam=args.lam,
        max_breakpoints=args.max_breakpoints,
        bp_rate_per_hour=args.max_bp_rate,
        objective_variant=args.variant,
    )
    bps = ggs(series, cfg)
    objective = total_objective(series, bps, cfg.lam, cfg.objective_variant)
    io.write_json(
        args.output,
        io.breakpoints_record(
            bps, series, lam=args.lam, max_breakpoints=cfg.resolve_max_breakpoints(series),
            objective=objective,
        ),
    )


def cmd_cluster(args):
    series = _load_series(args.input, args.channels)
    bp = io.read_json(args.breakpoints)
    bps = BreakpointSet(tuple(bp["breakpoints"]), bp["series_len"])
    if bps.series_len != series.n_samples:
        raise ConfigError(
            f"breakpoints are for {bps.series_len} samples, series has {series.n_samples}"
        )
    cfg = ClusterConfig(k=args.k, seed=args.seed, feature_mode=args.feature_mode)
    part = cluster_partition(series, bps, cfg)
    io.write_json(args.output, io.partition_record(part, series.rate_hz, series.start_time_s))


def cmd_evaluate(args):
    gt = io.partition_from_record(io.read_json(args.gt))
    proposal = io.partition_from_record(io.read_json(args.proposal))
    score = covering(gt, proposal, args.max_scope)
    out = {"cover": score.value, "baseline": baseline_covering(gt), "max_scope": args.max_scope}
    text = json.dumps(out, sort_keys=True)
    print(text)
    if args.output:
        io.write_json(args.output, out)


def cmd_run(args):
    cfg = _load_config(args.config, args.seed)
    dataset = io.load_dataset(args.dataset_dir)
    results = run_dataset(dataset, cfg)
    name = Path(args.dataset_dir).resolve().name
    doc = io.results_document(name, cfg, results)
    io.write_json(args.output, doc)
    summary = args.summary or str(Path(args.output).with_suffix("")) + "_summary.csv"
    io.write_table_csv(summary, [io.summary_row(doc)], io.SUMMARY_COLUMNS)
    print(json.dumps({"mean_cover": doc["summary"]["mean"], "n": doc["summary"]["n"]}, sort_keys=True))


def _parse_values(text, cast):
    return tuple(cast(v) for v in text.split(",")) if text else None


def cmd_ablate(args):
    cfg = _load_config(args.config, args.seed)
    if args.dataset_dir:
        dataset = io.load_dataset(args.dataset_dir)
    else:
        dataset = synth_dataset(args.suite)
    if args.kind == "lambda":
        values = _parse_values(args.values, float) or (1.0, 5.0, 15.0)
        sweep = lambda_sweep(dataset, cfg, values)
    elif args.kind == "missing":
        values = _parse_values(args.values, float)
        kwargs = {"repetitions": args.repetitions}
        if values:
            kwargs["fractions"] = values
        sweep = missing_data_sweep(dataset, cfg, **kwargs)
    else:
        values = _parse_values(args.values, int) or (2, 3, 4, 5)
        sweep = cluster_sweep(dataset, cfg, values)
    io.write_sweep_csv(args.output, sweep)


def cmd_synth(args):
    if args.spec:
        try:
            spec = DriveSuiteSpec.from_dict(io.read_json(args.spec))
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
    else:
        spec = SUITES[args.suite]
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    out = Path(args.output)
    if out.suffix == ".csv":
        if spec.n_drives != 1:
            raise ConfigError("a .csv output holds exactly one drive; use a directory")
        drive, _ = synth_drive(spec, 0)
        io.write_series_csv(out, dict(drive.channels), drive.drive_id)
        return
    out.mkdir(parents=True, exist_ok=True)
    truth = {}
    for i in range(spec.n_drives):
        drive, change_times = synth_drive(spec, i)
        io.write_series_csv(out / f"{drive.drive_id}.csv", dict(drive.channels), drive.drive_id)
        truth[drive.drive_id] = change_times
    io.write_json(out / "truth.json", {"spec": spec.to_dict(), "change_times_s": truth})


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="arousal-cpd", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("preprocess", help="filter, decimate and z-score a drive CSV")
    p.add_argument("input")
    p.add_argument("--config")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("segment", help="run GGS and write breakpoints JSON")
    p.add_argument("input")
    p.add_argument("--lambda", dest="lam", type=float, default=15.0)
    p.add_argument("--max-bp-rate", type=float, default=15.0, help="breakpoints per hour")
    p.add_argument("--max-breakpoints", type=int)
    p.add_argument("--channels", help="comma-separated subset of columns")
    p.add_argument("--variant", choices=OBJECTIVE_VARIANTS, default="paper")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("cluster", help="prune breakpoints by clustering segments")
    p.add_argument("input")
    p.add_argument("--breakpoints", required=True)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--channels")
    p.add_argument("--feature-mode", choices=("mean", "mean-plus-shape"), default="mean")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("evaluate", help="covering metric of a proposal against ground truth")
    p.add_argument("--gt", required=True)
    p.add_argument("--proposal", required=True)
    p.add_argument("--max-scope", choices=MAX_SCOPES, default="segments")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("run", help="full pipeline over every drive in a directory")
    p.add_argument("--dataset-dir", required=True)
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--summary", help="summary CSV path (default: <output>_summary.csv)")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("ablate", help="lambda, missing-data or cluster-count sweep")
    p.add_argument("kind", choices=("lambda", "missing", "clusters"))
    p.add_argument("--dataset-dir")
    p.add_argument("--suite", choices=sorted(SUITES), default="default",
                   help="synthetic suite used when no dataset dir is given")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--values", help="comma-separated sweep values")
    p.add_argument("--repetitions", type=int, default=20)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("synth", help="generate synthetic drives")
    p.add_argument("--spec")
    p.add_argument("--suite", choices=sorted(SUITES), default="default")
    p.add_argument("--seed", type=int)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_synth)
    return parser


def _fail(kind: str, message: str, code: int) -> int:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        return _fail("usage", str(exc), EXIT_USAGE)
    try:
        args.func(args)
    except ConfigError as exc:
        return _fail("config", str(exc), EXIT_USAGE)
    except (ArousalCPDError, OSError, ValueError, KeyError) as exc:
        return _fail(type(exc).__name__, str(exc), EXIT_RUNTIME)
    return 0


if __name__ == "__main__":
    sys.exit(main())
