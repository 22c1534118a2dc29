"""Dispatcher/worker machinery and the parallel data-processing pipeline.

A dispatcher assigns each bug scenario to a worker that runs the configured
simulator command into an isolated scratch directory (retrying crashed
runs); the collected failing waveforms then flow through the extraction
pipeline - sample, standardize, summarize - in parallel, and an ordered
merge assembles the final dataset. Results are canonicalized by scenario id
so the output bytes are identical for any worker count.
"""

from __future__ import annotations

import json
import shlex
import subprocess
import time
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Sequence

from .extract import (
    DEFAULT_STATS,
    DEFAULT_TICK_CAP,
    Dataset,
    FeatureRow,
    StatSet,
    assemble,
    sample_window,
    standardize,
    summarize,
    write_dataset_csv,
    write_rough_csv,
)
from .rtl import DesignSources, scan_sources, signals_for_targets
from .selection import prune
from .vcd import parse_header, list_full_names, stream_changes


class OrchestrateError(Exception):
    pass


class SimulatorNotFound(OrchestrateError):
    pass


class ScratchCollision(OrchestrateError):
    pass


class NoFailingWaveforms(OrchestrateError):
    pass


@dataclass
class PipelineConfig:
    design_dir: str
    targets: list[str]
    top_module: str
    dut_root: str | None = None
    simulator: str = ""
    sim_timeout: float = 120.0
    tick_cap: int = DEFAULT_TICK_CAP
    worker_count: int = 1
    train_per_module: int = 0
    test_per_module: int = 0
    reseed_count: int = 1
    retry_limit: int = 2
    seed: int = 0
    stats: tuple[str, ...] = DEFAULT_STATS.names
    keep_fraction: float = 0.6
    max_signals: int = 5000
    reduce: bool = False
    models: tuple[str, ...] = ("gbt", "random_forest", "knn")
    keep_rough: bool = False
    out_dir: str = "out"
    injection: dict | None = None

    def __post_init__(self):
        if self.worker_count < 1:
            raise ValueError("worker_count must be >= 1")
        if self.reseed_count < 1:
            raise ValueError("reseed_count must be >= 1")

    @classmethod
    def from_json_file(cls, path) -> "PipelineConfig":
        with open(path, "r", encoding="utf-8") as handle:
            doc = json.load(handle)
        doc.setdefault("stats", list(DEFAULT_STATS.names))
        doc["stats"] = tuple(doc["stats"])
        if "models" in doc:
            doc["models"] = tuple(doc["models"])
        return cls(**doc)

    def stat_set(self) -> StatSet:
        return StatSet(tuple(self.stats))


@dataclass
class ScenarioJob:
    scenario_id: str
    label: str
    seed: int
    scratch_dir: Path
    reseed_count: int = 1
    status: str = "queued"


@dataclass
class JobResult:
    scenario_id: str
    label: str
    status: str  # "done" or "failed"
    vcd_paths: list[str]
    wall_time: float
    attempts: int

    def to_dict(self) -> dict:
        return asdict(self)


def scenario_jobs(cfg: PipelineConfig, scratch_root, split: str, per_module: int) -> list[ScenarioJob]:
    """Jobs for one split; ids follow the ``{split}-{module}-{index}`` scheme
    shared with the fixture manifests, keeping train/test ranges disjoint."""
    import hashlib

    jobs = []
    for module in cfg.targets:
        for i in range(per_module):
            scenario_id = f"{split}-{module}-{i:04d}"
            digest = hashlib.sha256(
                f"{cfg.seed}\x1f{split}\x1f{module}\x1f{i}".encode()
            ).digest()
            jobs.append(
                ScenarioJob(
                    scenario_id=scenario_id,
                    label=module,
                    seed=int.from_bytes(digest[:4], "big"),
                    scratch_dir=Path(scratch_root) / scenario_id,
                    reseed_count=cfg.reseed_count,
                )
            )
    return jobs


def _format_command(template: str, **values) -> list[str]:
    return [part.format(**values) for part in shlex.split(template)]


def _run_one_job(job: ScenarioJob, cfg: PipelineConfig) -> JobResult:
    start = time.perf_counter()
    job.scratch_dir.mkdir(parents=True, exist_ok=True)
    vcd_paths: list[str] = []
    attempts = 0
    for reseed in range(job.reseed_count):
        out = job.scratch_dir / f"wave_{reseed:02d}.vcd"
        ok = False
        for _ in range(cfg.retry_limit + 1):
            attempts += 1
            args = _format_command(
                cfg.simulator,
                design_dir=cfg.design_dir,
                scenario_id=job.scenario_id,
                seed=job.seed + reseed,
                vcd_out=str(out),
            )
            try:
                proc = subprocess.run(args, capture_output=True, timeout=cfg.sim_timeout)
            except FileNotFoundError as exc:
                raise SimulatorNotFound(f"simulator command not found: {args[0]!r}") from exc
            except subprocess.TimeoutExpired:
                continue
            if proc.returncode == 0 and out.exists():
                ok = True
                break
        if not ok:
            return JobResult(
                scenario_id=job.scenario_id,
                label=job.label,
                status="failed",
                vcd_paths=vcd_paths,
                wall_time=time.perf_counter() - start,
                attempts=attempts,
            )
        vcd_paths.append(str(out))
    return JobResult(
        scenario_id=job.scenario_id,
        label=job.label,
        status="done",
        vcd_paths=vcd_paths,
        wall_time=time.perf_counter() - start,
        attempts=attempts,
    )


def dispatch(jobs: Sequence[ScenarioJob], cfg: PipelineConfig) -> list[JobResult]:
    """Run every job exactly once to a terminal status.

    Workers pull jobs concurrently (the simulator runs as a subprocess, so
    threads give full process-level parallelism); failed runs retry up to
    the configured limit. Results come back ordered by scenario id, making
    the outcome independent of scheduling."""
    seen: set[str] = set()
    for job in jobs:
        key = str(job.scratch_dir)
        if key in seen:
            raise ScratchCollision(f"two jobs share scratch dir {key}")
        seen.add(key)

    if cfg.worker_count == 1:
        results = [_run_one_job(job, cfg) for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=cfg.worker_count) as pool:
            results = list(pool.map(lambda j: _run_one_job(j, cfg), jobs))
    for job, result in zip(jobs, results):
        job.status = "done" if result.status == "done" else "failed"
    return sorted(results, key=lambda r: r.scenario_id)


# ---------------------------------------------------------------------------
# Data-processing pipeline

class _CountingWriter:
    __slots__ = ("n",)

    def __init__(self):
        self.n = 0

    def write(self, text: str):
        self.n += len(text)


@dataclass
class StageSizeReport:
    """Byte counts per pipeline stage: raw waveforms, rough per-tick CSV,
    per-scenario compressed CSV, and the final dataset CSV."""

    raw: int = 0
    rough: int = 0
    compressed: int = 0
    final: int = 0
    tick_capped: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def _process_waveform(payload) -> dict:
    (
        vcd_path,
        label,
        scenario_id,
        target_signals,
        instances,
        top_module,
        dut_root,
        tick_cap,
        stat_names,
        rough_out,
    ) = payload
    stats = StatSet(tuple(stat_names))
    with open(vcd_path, "rb") as stream:
        tree = parse_header(stream)
        report = prune(
            list_full_names(tree),
            target_signals,
            instances,
            top_module=top_module,
            dut_root=dut_root,
        )
        window = sample_window(
            stream_changes(stream),
            report,
            tick_cap=tick_cap,
            label=label,
            scenario_id=scenario_id,
        )
    window = standardize(window, tick_cap)
    counter = _CountingWriter()
    write_rough_csv(window, counter)
    if rough_out is not None:
        with open(rough_out, "w", encoding="utf-8") as handle:
            write_rough_csv(window, handle)
    row = summarize(window, stats)
    return {
        "scenario_id": scenario_id,
        "features": row.features,
        "feature_names": row.feature_names,
        "label": label,
        "rough_bytes": counter.n,
        "capped": window.available_ticks >= tick_cap,
    }


def run_data_pipeline(
    done_jobs: Sequence[JobResult], cfg: PipelineConfig
) -> tuple[Dataset, StageSizeReport]:
    """Extract and compress every failing waveform of the done jobs.

    Per-waveform work runs in parallel across processes; the merge orders
    rows by (scenario id, reseed index) so the final CSV is byte-identical
    for any worker count.
    """
    work = []
    raw_bytes = 0
    for result in sorted(done_jobs, key=lambda r: r.scenario_id):
        if result.status != "done":
            continue
        for k, path in enumerate(result.vcd_paths):
            raw_bytes += Path(path).stat().st_size
            work.append((result, k, path))
    if not work:
        raise NoFailingWaveforms("no completed jobs with failing waveforms")

    sources = DesignSources.from_paths(sorted(Path(cfg.design_dir).glob("*.sv")))
    table = scan_sources(sources)
    target_signals = {m: sorted(v) for m, v in signals_for_targets(table, cfg.targets).items()}

    rough_dir = None
    if cfg.keep_rough:
        rough_dir = Path(cfg.out_dir) / "rough"
        rough_dir.mkdir(parents=True, exist_ok=True)

    payloads = []
    for result, k, path in work:
        rough_out = (
            str(rough_dir / f"{result.scenario_id}_{k:02d}.csv") if rough_dir else None
        )
        payloads.append(
            (
                path,
                result.label,
                f"{result.scenario_id}#{k:02d}" if result.vcd_paths[1:] else result.scenario_id,
                target_signals,
                table.instances,
                cfg.top_module,
                cfg.dut_root,
                cfg.tick_cap,
                tuple(cfg.stats),
                rough_out,
            )
        )

    if cfg.worker_count == 1 or len(payloads) < 4:
        outputs = [_process_waveform(p) for p in payloads]
    else:
        with ProcessPoolExecutor(max_workers=cfg.worker_count) as pool:
            outputs = list(pool.map(_process_waveform, payloads, chunksize=8))

    report = StageSizeReport(raw=raw_bytes)
    rows = []
    by_scenario: dict[str, list[FeatureRow]] = {}
    for out in outputs:
        row = FeatureRow(
            features=out["features"],
            feature_names=out["feature_names"],
            label=out["label"],
            scenario_id=out["scenario_id"],
        )
        rows.append(row)
        report.rough += out["rough_bytes"]
        if out["capped"]:
            report.tick_capped.append(out["scenario_id"])
        by_scenario.setdefault(out["scenario_id"].split("#")[0], []).append(row)

    dataset = assemble(rows)
    for scenario_rows in by_scenario.values():
        counter = _CountingWriter()
        write_dataset_csv(assemble(scenario_rows), counter)
        report.compressed += counter.n
    counter = _CountingWriter()
    write_dataset_csv(dataset, counter)
    report.final = counter.n
    return dataset, report
