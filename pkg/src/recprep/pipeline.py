"""Threaded extract-transform-load runtime with deployment emulation.

One process hosts N preprocessing workers (threads), a bounded input
queue, and a rate-limited trainer sink standing in for the GPU. Where
the data and the workers "live" is expressed purely through network
emulation rules:

- colocated: workers share the trainer host; nothing crosses a network,
  and the worker count is capped by the host's core budget.
- disagg_cpu: workers run on a separate CPU pool; raw partition bytes
  cross the network on the way in, tensor bytes on the way out.
- isp: workers run inside the storage devices; only tensor bytes cross.

Every network crossing is imposed as a real sleep of
``latency + bytes * 8 / bandwidth`` and accounted exactly, so byte and
RPC-time comparisons between modes are measurements, not estimates.

Worker provisioning follows the train-manager/preprocess-manager split:
calibrate the trainer's consumption rate T, calibrate one worker's
production rate P, then run ceil(T / P) workers. The PRESTO_WORKERS
environment variable overrides "auto" provisioning.
"""

from __future__ import annotations

import csv
import json
import math
import os
import queue
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .columnar import PartitionReader, PartitionSet
from .errors import PipelineError
from .schema import FeatureSchema, TransformPlan, derive_transform_plan
from .tables import SparseColumn
from .timings import StageTimings
from .transforms import MiniBatch, transform_partition

MODES = ("colocated", "disagg_cpu", "isp")

WORKER_ENV_OVERRIDE = "PRESTO_WORKERS"


@dataclass(frozen=True)
class NetworkModel:
    """A point-to-point link: fixed per-call latency plus serialization time."""

    bandwidth_bps: float = 10e9
    latency_s: float = 200e-6
    enabled: bool = True

    def __post_init__(self):
        if self.bandwidth_bps <= 0:
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth_bps}")
        if self.latency_s < 0:
            raise ValueError(f"latency must be non-negative, got {self.latency_s}")

    def transfer_seconds(self, num_bytes: int) -> float:
        return self.latency_s + (num_bytes * 8) / self.bandwidth_bps


def emulate_transfer(num_bytes: int, network: NetworkModel) -> float:
    """Impose one network crossing as a real delay; returns the seconds slept."""
    if not network.enabled:
        raise ValueError("emulate_transfer called on a disabled network")
    delay = network.transfer_seconds(num_bytes)
    if delay > 0:
        time.sleep(delay)
    return delay


@dataclass(frozen=True)
class DeploymentSpec:
    """Where preprocessing runs and how it is provisioned."""

    mode: str
    worker_count: int | str = "auto"
    trainer_rate: float | str = "calibrate"
    network: NetworkModel = field(default_factory=NetworkModel)
    colocated_core_budget: int = 16
    queue_capacity: int | None = None  # default: 2x worker count
    sink_rate: float = 50.0  # intrinsic rate of the emulated trainer
    calibration_window_s: float = 5.0
    calibration_repeats: int = 3

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if isinstance(self.worker_count, str):
            if self.worker_count != "auto":
                raise ValueError(f"worker_count must be a count or 'auto', got {self.worker_count!r}")
        elif self.worker_count < 1:
            raise ValueError(f"worker_count must be >= 1, got {self.worker_count}")
        if isinstance(self.trainer_rate, str):
            if self.trainer_rate != "calibrate":
                raise ValueError(f"trainer_rate must be a rate or 'calibrate', got {self.trainer_rate!r}")
        elif self.trainer_rate <= 0:
            raise ValueError(f"trainer_rate must be positive, got {self.trainer_rate}")
        if self.colocated_core_budget < 1:
            raise ValueError("colocated_core_budget must be >= 1")
        if self.queue_capacity is not None and self.queue_capacity < 1:
            raise ValueError("queue_capacity must be >= 1")
        if self.sink_rate <= 0:
            raise ValueError("sink_rate must be positive")


class InputQueue:
    """Bounded multi-producer single-consumer channel with occupancy stats."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError(f"queue capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._q: queue.Queue = queue.Queue(maxsize=capacity)
        self._lock = threading.Lock()
        self.max_occupancy = 0
        self.total_enqueued = 0
        self.total_dequeued = 0

    def put(self, item, timeout: float | None = None) -> None:
        self._q.put(item, timeout=timeout)
        with self._lock:
            self.total_enqueued += 1
            self.max_occupancy = max(self.max_occupancy, self._q.qsize())

    def get(self, timeout: float | None = None):
        item = self._q.get(timeout=timeout)
        with self._lock:
            self.total_dequeued += 1
        return item

    def empty(self) -> bool:
        return self._q.empty()


class TrainerSink:
    """Token-bucket consumer standing in for the GPU trainer.

    ``consume`` blocks just long enough to keep the long-run consumption
    rate at or below ``rate`` batches/sec, and records what it ate.
    """

    def __init__(self, rate: float):
        if rate <= 0:
            raise ValueError(f"trainer sink rate must be positive, got {rate}")
        self.rate = rate
        self.records: list[tuple[int, float]] = []  # (seq_no, consume time)
        self._next_slot = 0.0

    def reset(self) -> None:
        self.records.clear()
        self._next_slot = 0.0

    def consume(self, batch: MiniBatch) -> None:
        now = time.perf_counter()
        slot = max(self._next_slot, now)
        wait = slot - now
        if wait > 0:
            time.sleep(wait)
        self._next_slot = slot + 1.0 / self.rate
        self.records.append((batch.seq_no, time.perf_counter()))


def _dummy_batch(schema: FeatureSchema) -> MiniBatch:
    empty = SparseColumn(
        offsets=np.zeros(2, dtype=np.uint64), values=np.empty(0, dtype=np.uint64)
    )
    return MiniBatch(
        seq_no=-1,
        dense=np.zeros((1, schema.num_dense), dtype=np.float32),
        sparse=[empty] * schema.num_output_sparse,
    )


def calibrate_trainer_throughput(
    sink: TrainerSink, schema: FeatureSchema, window_s: float = 5.0
) -> float:
    """Measure the sink's sustained consumption rate with dummy batches.

    Stress-feeds the sink for ``window_s`` seconds; the first tenth of
    the window is warm-up and excluded from the measurement.
    """
    if window_s <= 0:
        raise ValueError("calibration window must be positive")
    dummy = _dummy_batch(schema)
    sink.reset()
    start = time.perf_counter()
    warmup_end = start + window_s * 0.1
    deadline = start + window_s
    counted = 0
    window_start = None
    last_done = None
    while time.perf_counter() < deadline:
        sink.consume(dummy)
        t_done = time.perf_counter()
        if window_start is None:
            if t_done >= warmup_end:
                # measurement boundary; this consume itself is not counted
                window_start = t_done
        else:
            counted += 1
            last_done = t_done
    sink.reset()
    if counted == 0 or window_start is None or last_done is None:
        raise PipelineError(
            f"trainer calibration consumed nothing in {window_s:.2f}s; "
            f"sink rate {sink.rate}/s is too slow for the window"
        )
    return counted / (last_done - window_start)


def calibrate_worker_throughput(
    deployment: DeploymentSpec,
    schema: FeatureSchema,
    pset: PartitionSet,
    plan: TransformPlan | None = None,
    repeats: int | None = None,
) -> float:
    """Measure one worker's end-to-end rate (extract through assemble).

    Runs the full read+decode+transform+assemble path over sample
    partitions ``repeats`` times and returns the median batches/sec.
    Network emulation is deliberately excluded: this is the worker's own
    production capability, the P in ceil(T/P).
    """
    sample_ids = pset.partition_ids()[:3]
    if len(sample_ids) < 3:
        raise PipelineError(
            f"worker calibration needs at least 3 sample partitions, have {len(sample_ids)}"
        )
    if plan is None:
        plan = derive_transform_plan(schema, seed=0)
    repeats = deployment.calibration_repeats if repeats is None else repeats
    rates = []
    for _ in range(max(3, repeats)):
        start = time.perf_counter()
        for pid in sample_ids:
            with PartitionReader(pset.paths[pid], schema) as reader:
                table = reader.read_table(schema)
            transform_partition(table, plan, schema, seq_no=pid)
        elapsed = time.perf_counter() - start
        rates.append(len(sample_ids) / elapsed)
    return float(np.median(rates))


def provision_workers(trainer_rate: float, worker_rate: float) -> int:
    """Minimal worker count n with n * worker_rate >= trainer_rate.

    ceil(T/P), with a correction loop so float rounding in the division
    can never violate minimality.
    """
    if trainer_rate <= 0:
        raise ValueError(f"trainer rate must be positive, got {trainer_rate}")
    if worker_rate <= 0:
        raise ValueError(f"worker rate must be positive, got {worker_rate}")
    n = max(1, math.ceil(trainer_rate / worker_rate))
    while n > 1 and (n - 1) * worker_rate >= trainer_rate:
        n -= 1
    while n * worker_rate < trainer_rate:
        n += 1
    return n


@dataclass
class BatchRecord:
    """Everything measured about one processed partition."""

    seq_no: int
    worker: int
    attempt: int
    start_s: float
    end_s: float
    timings: StageTimings
    raw_bytes: int
    tensor_bytes: int
    digest: str = ""

    @property
    def wall_s(self) -> float:
        return self.end_s - self.start_s


_CSV_COLUMNS = [
    "seq_no",
    "worker",
    "attempt",
    "start_s",
    "end_s",
    "wall_s",
    "extract_read_s",
    "extract_decode_s",
    "bucketize_s",
    "sigridhash_s",
    "log_s",
    "batch_convert_s",
    "rpc_transfer_s",
    "raw_bytes",
    "tensor_bytes",
    "digest",
]

# columns whose values depend on wall-clock measurement, excluded when
# comparing two runs for content determinism
TIMING_CSV_COLUMNS = frozenset(
    c for c in _CSV_COLUMNS if c.endswith("_s")
)


@dataclass
class RunReport:
    """Outcome of one pipeline run: rates, byte counters, per-batch rows."""

    mode: str
    worker_count: int
    trainer_rate: float
    worker_rate: float | None
    batches: int
    total_rows: int
    elapsed_s: float
    throughput: float  # mini-batches/sec delivered to the trainer
    trainer_utilization: float
    raw_in_bytes: int
    tensor_out_bytes: int
    rpc_seconds: float
    queue_capacity: int
    queue_max_occupancy: int
    retries: int
    kernel_backend: str
    records: list[BatchRecord] = field(default_factory=list)

    def consumed_seq_nos(self) -> list[int]:
        return sorted(r.seq_no for r in self.records)

    def stage_summary(self) -> dict[str, dict[str, float]]:
        out: dict[str, dict[str, float]] = {}
        for stage in StageTimings().as_dict():
            values = np.array([getattr(r.timings, stage) for r in self.records])
            if len(values) == 0:
                values = np.zeros(1)
            out[stage] = {
                "mean": float(values.mean()),
                "p50": float(np.percentile(values, 50)),
                "p95": float(np.percentile(values, 95)),
            }
        return out

    def summary_dict(self) -> dict:
        return {
            "mode": self.mode,
            "worker_count": self.worker_count,
            "trainer_rate": self.trainer_rate,
            "worker_rate": self.worker_rate,
            "batches": self.batches,
            "total_rows": self.total_rows,
            "elapsed_s": self.elapsed_s,
            "throughput": self.throughput,
            "trainer_utilization": self.trainer_utilization,
            "raw_in_bytes": self.raw_in_bytes,
            "tensor_out_bytes": self.tensor_out_bytes,
            "rpc_seconds": self.rpc_seconds,
            "queue_capacity": self.queue_capacity,
            "queue_max_occupancy": self.queue_max_occupancy,
            "retries": self.retries,
            "kernel_backend": self.kernel_backend,
            "stages": self.stage_summary(),
        }

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.summary_dict(), indent=2) + "\n")

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(_CSV_COLUMNS)
            for r in sorted(self.records, key=lambda r: r.seq_no):
                t = r.timings
                writer.writerow(
                    [
                        r.seq_no,
                        r.worker,
                        r.attempt,
                        f"{r.start_s:.6f}",
                        f"{r.end_s:.6f}",
                        f"{r.wall_s:.6f}",
                        f"{t.extract_read:.6f}",
                        f"{t.extract_decode:.6f}",
                        f"{t.bucketize:.6f}",
                        f"{t.sigridhash:.6f}",
                        f"{t.log:.6f}",
                        f"{t.batch_convert:.6f}",
                        f"{t.rpc_transfer:.6f}",
                        r.raw_bytes,
                        r.tensor_bytes,
                        r.digest,
                    ]
                )


class _RunState:
    """Shared mutable state for one run, guarded by a single lock."""

    def __init__(self):
        self.lock = threading.Lock()
        self.records: list[BatchRecord] = []
        self.raw_in_bytes = 0
        self.tensor_out_bytes = 0
        self.rpc_seconds = 0.0
        self.retries = 0
        self.abort: Exception | None = None
        self.abort_event = threading.Event()
        self.workers_done = threading.Event()

    def fail(self, exc: Exception) -> None:
        with self.lock:
            if self.abort is None:
                self.abort = exc
        self.abort_event.set()


def _resolve_worker_count(
    deployment: DeploymentSpec,
    trainer_rate: float,
    schema: FeatureSchema,
    pset: PartitionSet,
    plan: TransformPlan,
) -> tuple[int, float | None]:
    """Apply the provisioning policy; returns (count, measured P or None)."""
    if isinstance(deployment.worker_count, int):
        n = deployment.worker_count
        worker_rate = None
    else:
        env = os.environ.get(WORKER_ENV_OVERRIDE)
        if env is not None:
            try:
                n = int(env)
            except ValueError:
                raise ValueError(f"{WORKER_ENV_OVERRIDE}={env!r} is not an integer") from None
            if n < 1:
                raise ValueError(f"{WORKER_ENV_OVERRIDE} must be >= 1, got {n}")
            worker_rate = None
        else:
            worker_rate = calibrate_worker_throughput(deployment, schema, pset, plan)
            n = provision_workers(trainer_rate, worker_rate)
            if deployment.mode == "colocated":
                n = min(n, deployment.colocated_core_budget)
    if deployment.mode == "colocated" and n > deployment.colocated_core_budget:
        raise ValueError(
            f"colocated mode allows at most {deployment.colocated_core_budget} workers, requested {n}"
        )
    return n, worker_rate


def run_pipeline(
    deployment: DeploymentSpec,
    schema: FeatureSchema,
    pset: PartitionSet,
    plan: TransformPlan | None = None,
    *,
    plan_seed: int = 0,
    batch_budget: int | None = None,
    duration_s: float | None = None,
    digest_batches: bool = True,
    fault_hook=None,
) -> RunReport:
    """Run the full pipeline over a partition set and report on it.

    Each worker owns a static round-robin share of the partition ids and
    processes them in order, so batch content is deterministic for any
    worker count. ``fault_hook(seq_no, attempt)``, when given, is called
    before each partition attempt (test instrumentation for the
    crash-retry path). A partition that fails once is retried by its
    owner; a second failure aborts the run.
    """
    if pset.num_partitions == 0:
        raise PipelineError("partition set is empty")
    if plan is None:
        plan = derive_transform_plan(schema, seed=plan_seed)

    if isinstance(deployment.trainer_rate, str):  # "calibrate"
        sink = TrainerSink(deployment.sink_rate)
        trainer_rate = calibrate_trainer_throughput(
            sink, schema, window_s=deployment.calibration_window_s
        )
    else:
        trainer_rate = float(deployment.trainer_rate)
        sink = TrainerSink(trainer_rate)

    n_workers, worker_rate = _resolve_worker_count(deployment, trainer_rate, schema, pset, plan)

    all_ids = pset.partition_ids()
    if batch_budget is not None:
        all_ids = all_ids[:batch_budget]
    shares = [all_ids[w::n_workers] for w in range(n_workers)]

    capacity = deployment.queue_capacity or 2 * n_workers
    iq = InputQueue(capacity)
    state = _RunState()
    use_network = deployment.mode in ("disagg_cpu", "isp") and deployment.network.enabled
    send_raw = deployment.mode == "disagg_cpu" and use_network

    run_start = time.perf_counter()
    deadline = run_start + duration_s if duration_s is not None else None

    def process_one(worker_id: int, pid: int, attempt: int) -> None:
        if fault_hook is not None:
            fault_hook(pid, attempt)
        timings = StageTimings()
        t0 = time.perf_counter()
        with PartitionReader(pset.paths[pid], schema) as reader:
            table = reader.read_table(schema, timings=timings)
            raw_bytes = reader.stats.bytes_read
        if send_raw:
            dt = emulate_transfer(raw_bytes, deployment.network)
            timings.add("rpc_transfer", dt)
            with state.lock:
                state.raw_in_bytes += raw_bytes
                state.rpc_seconds += dt
        batch = transform_partition(table, plan, schema, seq_no=pid, timings=timings)
        tensor_bytes = batch.nbytes
        if use_network:
            dt = emulate_transfer(tensor_bytes, deployment.network)
            timings.add("rpc_transfer", dt)
            with state.lock:
                state.tensor_out_bytes += tensor_bytes
                state.rpc_seconds += dt
        digest = batch.digest() if digest_batches else ""
        while True:
            # never block forever on a full queue if the run is aborting
            if state.abort_event.is_set():
                return
            try:
                iq.put(batch, timeout=0.05)
                break
            except queue.Full:
                continue
        t1 = time.perf_counter()
        record = BatchRecord(
            seq_no=pid,
            worker=worker_id,
            attempt=attempt,
            start_s=t0 - run_start,
            end_s=t1 - run_start,
            timings=timings,
            raw_bytes=raw_bytes if send_raw else 0,
            tensor_bytes=tensor_bytes if use_network else 0,
            digest=digest,
        )
        with state.lock:
            state.records.append(record)

    def worker_loop(worker_id: int) -> None:
        pending = [(pid, 1) for pid in shares[worker_id]]
        idx = 0
        while idx < len(pending):
            if state.abort_event.is_set():
                return
            if deadline is not None and time.perf_counter() >= deadline:
                return
            pid, attempt = pending[idx]
            idx += 1
            try:
                process_one(worker_id, pid, attempt)
            except Exception as exc:
                if attempt == 1:
                    with state.lock:
                        state.retries += 1
                    pending.append((pid, 2))
                else:
                    state.fail(
                        PipelineError(
                            f"partition {pid} failed twice on worker {worker_id}: {exc!r}"
                        )
                    )
                    return

    consumed: list[tuple[int, float]] = []

    def trainer_loop() -> None:
        while True:
            if state.abort_event.is_set():
                return
            try:
                batch = iq.get(timeout=0.02)
            except queue.Empty:
                if state.workers_done.is_set() and iq.empty():
                    return
                continue
            sink.consume(batch)
            consumed.append(sink.records[-1])

    threads = [
        threading.Thread(target=worker_loop, args=(w,), name=f"prep-worker-{w}")
        for w in range(n_workers)
    ]
    trainer = threading.Thread(target=trainer_loop, name="trainer-sink")
    trainer.start()
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    state.workers_done.set()
    trainer.join()
    elapsed = time.perf_counter() - run_start

    if state.abort is not None:
        raise state.abort

    batches = len(consumed)
    if batches != len(state.records):
        raise PipelineError(
            f"trainer consumed {batches} batches but workers produced {len(state.records)}"
        )

    if batches >= 2:
        times = sorted(t for _, t in consumed)
        span = times[-1] - times[0]
        achieved = (batches - 1) / span if span > 0 else float("inf")
    else:
        achieved = batches / elapsed if elapsed > 0 else 0.0
    utilization = min(1.0, achieved / trainer_rate) if trainer_rate > 0 else 0.0

    processed_rows = sum(pset.rows[r.seq_no] for r in state.records)
    throughput = batches / elapsed if elapsed > 0 else 0.0

    return RunReport(
        mode=deployment.mode,
        worker_count=n_workers,
        trainer_rate=trainer_rate,
        worker_rate=worker_rate,
        batches=batches,
        total_rows=processed_rows,
        elapsed_s=elapsed,
        throughput=throughput,
        trainer_utilization=utilization,
        raw_in_bytes=state.raw_in_bytes,
        tensor_out_bytes=state.tensor_out_bytes,
        rpc_seconds=state.rpc_seconds,
        queue_capacity=capacity,
        queue_max_occupancy=iq.max_occupancy,
        retries=state.retries,
        kernel_backend=kernels.backend_name(),
        records=state.records,
    )


@dataclass
class SweepPoint:
    workers: int
    throughput: float
    trainer_utilization: float
    elapsed_s: float


def scaling_sweep(
    deployment: DeploymentSpec,
    schema: FeatureSchema,
    pset: PartitionSet,
    worker_counts: list[int],
    plan: TransformPlan | None = None,
    **run_kwargs,
) -> list[SweepPoint]:
    """One run_pipeline per worker count; returns the throughput curve."""
    if not worker_counts or any(c < 1 for c in worker_counts):
        raise ValueError("worker counts must all be >= 1")
    points = []
    for count in worker_counts:
        spec = DeploymentSpec(
            mode=deployment.mode,
            worker_count=count,
            trainer_rate=deployment.trainer_rate,
            network=deployment.network,
            colocated_core_budget=max(deployment.colocated_core_budget, count),
            queue_capacity=deployment.queue_capacity,
            sink_rate=deployment.sink_rate,
            calibration_window_s=deployment.calibration_window_s,
            calibration_repeats=deployment.calibration_repeats,
        )
        report = run_pipeline(spec, schema, pset, plan=plan, digest_batches=False, **run_kwargs)
        points.append(
            SweepPoint(
                workers=count,
                throughput=report.throughput,
                trainer_utilization=report.trainer_utilization,
                elapsed_s=report.elapsed_s,
            )
        )
    return points


def write_sweep_csv(points: list[SweepPoint], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["workers", "throughput", "trainer_utilization", "elapsed_s"])
        for p in points:
            writer.writerow([p.workers, f"{p.throughput:.4f}", f"{p.trainer_utilization:.4f}", f"{p.elapsed_s:.4f}"])
