"""Operator command line: gen, run, sweep, plan, report.

gen    synthesize a partitioned dataset and its manifest
run    execute the pipeline over a dataset and write a run report
sweep  repeat a run across worker counts, emit the scaling curve
plan   provision devices for a trainer rate and compare their costs
report merge run summaries into a per-stage breakdown, normalized
       against a baseline run

Exit codes: 0 success, 2 bad flags or bad configuration, 1 runtime
failure. Every stochastic step is pinned by --seed, so reruns with the
same flags produce identical artifacts (timing columns aside).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .columnar import (
    PartitionSet,
    load_manifest,
    write_manifest,
    write_partition,
)
from .datagen import GenSpec, generate
from .errors import ConfigError, FormatError, PipelineError, UnknownFeatureError
from .pipeline import (
    MODES,
    DeploymentSpec,
    NetworkModel,
    run_pipeline,
    scaling_sweep,
    write_sweep_csv,
)
from .schema import preset, validate_config
from .sysmodel import (
    DEFAULT_CATALOG,
    CostParams,
    compare_deployments,
    load_catalog,
)

MANIFEST_NAME = "manifest.json"

_BANDWIDTH_SUFFIX = {"k": 1e3, "m": 1e6, "g": 1e9, "t": 1e12}
_LATENCY_SUFFIX = {"s": 1.0, "ms": 1e-3, "us": 1e-6, "ns": 1e-9}


def parse_net(text: str) -> NetworkModel:
    """Parse a link description like ``10G,200us`` (bits/sec, one-way latency)."""
    parts = text.split(",")
    if len(parts) != 2:
        raise ConfigError(f"--net must look like '10G,200us', got {text!r}")
    bw_text, lat_text = (p.strip() for p in parts)

    scale = 1.0
    if bw_text and bw_text[-1].lower() in _BANDWIDTH_SUFFIX:
        scale = _BANDWIDTH_SUFFIX[bw_text[-1].lower()]
        bw_text = bw_text[:-1]
    try:
        bandwidth = float(bw_text) * scale
    except ValueError:
        raise ConfigError(f"--net bandwidth {parts[0]!r} is not a number") from None

    lat_scale = None
    for suffix in ("ms", "us", "ns", "s"):
        if lat_text.endswith(suffix):
            lat_scale = _LATENCY_SUFFIX[suffix]
            lat_text = lat_text[: -len(suffix)]
            break
    if lat_scale is None:
        lat_scale = 1.0  # bare number: seconds
    try:
        latency = float(lat_text) * lat_scale
    except ValueError:
        raise ConfigError(f"--net latency {parts[1]!r} is not a number") from None

    if bandwidth <= 0 or latency < 0:
        raise ConfigError(f"--net values out of range in {text!r}")
    return NetworkModel(bandwidth_bps=bandwidth, latency_s=latency)


def parse_workers(text: str) -> int | str:
    if text == "auto":
        return "auto"
    try:
        count = int(text)
    except ValueError:
        raise ConfigError(f"--workers must be 'auto' or an integer, got {text!r}") from None
    if count < 1:
        raise ConfigError(f"--workers must be >= 1, got {count}")
    return count


def parse_rate(text: str) -> float | str:
    if text == "calibrate":
        return "calibrate"
    try:
        rate = float(text)
    except ValueError:
        raise ConfigError(
            f"--trainer-rate must be 'calibrate' or a number, got {text!r}"
        ) from None
    if rate <= 0:
        raise ConfigError(f"--trainer-rate must be positive, got {rate}")
    return rate


def parse_worker_list(text: str) -> list[int]:
    try:
        counts = [int(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise ConfigError(f"--workers list must be integers like '1,2,4', got {text!r}") from None
    if not counts or any(c < 1 for c in counts):
        raise ConfigError(f"--workers list entries must be >= 1, got {text!r}")
    return counts


def _load_schema(args) -> tuple:
    """(schema, preset name or None) from --preset or --config."""
    if args.preset is not None:
        return preset(args.preset).schema, args.preset
    doc = json.loads(Path(args.config).read_text())
    return validate_config(doc), doc.get("preset")


def _deployment_from_args(args) -> DeploymentSpec:
    return DeploymentSpec(
        mode=args.mode,
        worker_count=parse_workers(args.workers),
        trainer_rate=parse_rate(args.trainer_rate),
        network=parse_net(args.net),
        colocated_core_budget=args.core_budget,
        sink_rate=args.sink_rate,
        calibration_window_s=args.calibration_window,
    )


def cmd_gen(args) -> int:
    schema, preset_name = _load_schema(args)
    if args.rows < 1:
        raise ConfigError(f"--rows must be >= 1, got {args.rows}")
    if args.batch_size < 1:
        raise ConfigError(f"--batch-size must be >= 1, got {args.batch_size}")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    num_partitions = -(-args.rows // args.batch_size)
    pset = PartitionSet(rows_per_partition=args.batch_size)
    for pid in range(num_partitions):
        rows = min(args.batch_size, args.rows - pid * args.batch_size)
        table = generate(schema, GenSpec(num_rows=rows, rng_seed=args.seed), partition_id=pid)
        path = out / f"part-{pid:05d}.psf1"
        write_partition(path, table, schema, encoding=args.encoding)
        pset.paths[pid] = path
        pset.rows[pid] = rows

    extra = {"seed": args.seed, "preset": preset_name, "requested_rows": args.rows}
    write_manifest(out / MANIFEST_NAME, pset, schema, extra=extra)
    print(f"wrote {num_partitions} partitions ({args.rows} rows) to {out}")
    return 0


def cmd_run(args) -> int:
    pset, schema, _ = load_manifest(Path(args.data) / MANIFEST_NAME)
    deployment = _deployment_from_args(args)
    report = run_pipeline(
        deployment, schema, pset, plan_seed=args.seed, batch_budget=args.batch_budget
    )

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report.write_csv(out / "report.csv")
    report.write_json(out / "report.json")
    print(
        f"mode={report.mode} workers={report.worker_count} batches={report.batches} "
        f"throughput={report.throughput:.2f}/s utilization={report.trainer_utilization:.3f}"
    )
    print(f"reports in {out}")
    return 0


def cmd_sweep(args) -> int:
    pset, schema, _ = load_manifest(Path(args.data) / MANIFEST_NAME)
    counts = parse_worker_list(args.workers)
    base = DeploymentSpec(
        mode=args.mode,
        worker_count=1,
        trainer_rate=parse_rate(args.trainer_rate),
        network=parse_net(args.net),
        colocated_core_budget=args.core_budget,
        sink_rate=args.sink_rate,
        calibration_window_s=args.calibration_window,
    )
    points = scaling_sweep(base, schema, pset, counts, plan_seed=args.seed)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_sweep_csv(points, out / "sweep.csv")
    for p in points:
        print(f"workers={p.workers} throughput={p.throughput:.2f}/s")
    print(f"sweep curve in {out / 'sweep.csv'}")
    return 0


def cmd_plan(args) -> int:
    profiles = load_catalog(args.catalog) if args.catalog else list(DEFAULT_CATALOG)
    params = CostParams(
        duration_hours=args.duration_hours,
        electricity_usd_per_kwh=args.electricity,
    )
    rate = parse_rate(args.trainer_rate)
    if isinstance(rate, str):
        raise ConfigError("plan needs a numeric --trainer-rate")
    report = compare_deployments(rate, profiles, params)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report.write_csv(out / "plan.csv")
    report.write_json(out / "plan.json")
    for row in report.rows:
        print(
            f"{row.name}: units={row.units_required} nodes={row.nodes} "
            f"power={row.total_power_watts:.1f}W cost-eff-ratio={row.cost_efficiency_ratio:.3g}"
        )
    print(f"plan in {out}")
    return 0


_REPORT_STAGES = [
    "extract_read",
    "extract_decode",
    "bucketize",
    "sigridhash",
    "log",
    "batch_convert",
    "rpc_transfer",
]


def _normalize(value: float, base: float) -> float:
    if base == 0.0:
        return 1.0 if value == 0.0 else float("inf")
    return value / base


def cmd_report(args) -> int:
    summaries = []
    for path in args.inputs:
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise FormatError(f"cannot read run summary {path}: {exc}") from exc
        if "stages" not in doc or "throughput" not in doc:
            raise FormatError(f"{path} is not a run summary (missing stages/throughput)")
        label = Path(path).stem
        if label == "report":  # default file name; disambiguate by directory
            label = Path(path).resolve().parent.name
        summaries.append((label, doc))

    labels = [label for label, _ in summaries]
    baseline = args.baseline or labels[0]
    if baseline not in labels:
        raise ConfigError(f"--baseline {baseline!r} not among inputs {labels}")
    base_doc = dict(summaries)[baseline]

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    table = out / "breakdown.csv"
    with open(table, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label", "throughput_norm"] + [f"{s}_norm" for s in _REPORT_STAGES])
        for label, doc in summaries:
            row = [label, f"{_normalize(doc['throughput'], base_doc['throughput']):.6g}"]
            for stage in _REPORT_STAGES:
                val = doc["stages"][stage]["mean"]
                base = base_doc["stages"][stage]["mean"]
                row.append(f"{_normalize(val, base):.6g}")
            writer.writerow(row)
    print(f"breakdown (baseline {baseline}) in {table}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="recprep",
        description="Generate, preprocess, and cost-model recommendation training data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("gen", help="synthesize a partitioned dataset")
    src = p_gen.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", help="model preset name (RM1..RM5)")
    src.add_argument("--config", help="JSON schema config file")
    p_gen.add_argument("--rows", type=int, required=True, help="total rows")
    p_gen.add_argument("--batch-size", type=int, default=8192, help="rows per partition")
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--encoding", choices=["plain", "dictionary", "auto"], default="plain")
    p_gen.add_argument("--out", default="recprep-data", help="output directory")
    p_gen.set_defaults(func=cmd_gen)

    def add_run_flags(p):
        p.add_argument("--data", required=True, help="dataset directory (with manifest)")
        p.add_argument("--mode", choices=list(MODES), required=True)
        p.add_argument("--trainer-rate", default="calibrate", help="batches/sec or 'calibrate'")
        p.add_argument("--net", default="10G,200us", help="bandwidth,latency e.g. 10G,200us")
        p.add_argument("--core-budget", type=int, default=16,
                       help="max workers sharing the trainer host in colocated mode")
        p.add_argument("--sink-rate", type=float, default=50.0,
                       help="intrinsic rate of the emulated trainer sink")
        p.add_argument("--calibration-window", type=float, default=5.0)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default="recprep-report", help="report directory")

    p_run = sub.add_parser("run", help="run the pipeline over a dataset")
    add_run_flags(p_run)
    p_run.add_argument("--workers", default="auto", help="worker count or 'auto'")
    p_run.add_argument("--batch-budget", type=int, default=None,
                       help="stop after this many partitions")
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="scaling curve across worker counts")
    add_run_flags(p_sweep)
    p_sweep.add_argument("--workers", required=True, help="comma list, e.g. 1,2,4,8")
    p_sweep.set_defaults(func=cmd_sweep)

    p_plan = sub.add_parser("plan", help="device provisioning and cost comparison")
    p_plan.add_argument("--catalog", help="device catalog JSON (default: built-in)")
    p_plan.add_argument("--trainer-rate", required=True, help="trainer demand, batches/sec")
    p_plan.add_argument("--duration-hours", type=float, default=26280.0)
    p_plan.add_argument("--electricity", type=float, default=0.0733, help="$/kWh")
    p_plan.add_argument("--out", default="recprep-report")
    p_plan.set_defaults(func=cmd_plan)

    p_report = sub.add_parser("report", help="normalized per-stage breakdown of runs")
    p_report.add_argument("--inputs", nargs="+", required=True, help="run report.json files")
    p_report.add_argument("--baseline", help="label of the baseline input (default: first)")
    p_report.add_argument("--out", default="recprep-report")
    p_report.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (FormatError, UnknownFeatureError, PipelineError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ConfigError, ValueError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        print(parser.format_usage().rstrip(), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
