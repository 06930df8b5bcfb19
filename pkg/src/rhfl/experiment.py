"""Seeded experiment execution, ablation sweeps and plot-data export."""
from __future__ import annotations

import csv
import io
import json
import logging
import os
import traceback
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any

import numpy as np

from . import containers
from .config import ABLATION_PRESETS, ExperimentSpec, FederationConfig, dump_federation, dumps
from .errors import FormatError
from .federation import RunResult, run_rhfl_plus

logger = logging.getLogger(__name__)

METRICS_SCHEMA = 1
METRICS_HEADER = (
    "schema", "run", "seed",
    "noise_kind", "noise_rate", "partition", "beta", "schedule_scale",
    "ce_weight", "rce_weight", "temperature", "confidence_gain",
    "hfl", "sl", "dlr", "eccr",
    "phase", "round", "client", "arch",
    "accuracy", "sl_loss", "confidence", "weight", "realized_noise_rate",
)
ABLATION_AXES = ("ablation", "ablation.hfl", "ablation.sl", "ablation.dlr", "ablation.eccr")


@dataclass(frozen=True)
class RunJob:
    run_id: str
    seed: int
    point: dict[str, Any]
    config: FederationConfig
    run_dir: str
    checkpoints: bool
    save_datasets: bool


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def metrics_rows(job: RunJob, result: RunResult) -> list[list[str]]:
    cfg = job.config
    fixed = [
        METRICS_SCHEMA, job.run_id, job.seed,
        cfg.noise.kind, float(cfg.noise.rate), cfg.data.partition, float(cfg.data.beta),
        float(cfg.dlr.schedule_scale), float(cfg.loss.ce_weight), float(cfg.loss.rce_weight),
        float(cfg.loss.temperature), float(cfg.eccr.confidence_gain),
        cfg.ablation.hfl, cfg.ablation.sl, cfg.ablation.dlr, cfg.ablation.eccr,
    ]
    rows = []
    for rec in result.records:
        for k, client in enumerate(result.clients):
            rows.append([_fmt(v) for v in fixed + [
                rec.phase, rec.index, k, client.arch.name,
                rec.accuracies[k], rec.sl_losses[k],
                None if rec.confidences is None else float(rec.confidences[k]),
                None if rec.weights is None else float(rec.weights[k]),
                result.world.realized_noise[k],
            ]])
    return rows


def _csv_text(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(METRICS_HEADER)
    writer.writerows(rows)
    return buf.getvalue()


def execute_run(job: RunJob) -> dict[str, Any]:
    """Run one (grid point, seed) and write its directory; never raises."""
    run_dir = Path(job.run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.toml").write_text(f"# seed = {job.seed}\n" + dump_federation(job.config), encoding="utf-8")
    entry: dict[str, Any] = {"run": job.run_id, "seed": job.seed, "point": job.point,
                             "ablation": job.config.ablation.label}

    def on_round_end(t, clients):
        if not job.checkpoints:
            return
        ck = run_dir / "checkpoints"
        ck.mkdir(exist_ok=True)
        for c in clients:
            containers.save_checkpoint(c.model, ck / f"round{t:03d}_client{c.id}.rhck")

    try:
        result = run_rhfl_plus(job.config, job.seed, on_round_end)
    except Exception as exc:  # recorded per grid point; the sweep continues
        logger.error("run %s failed: %s", job.run_id, exc)
        entry.update(status="failed", error=f"{type(exc).__name__}: {exc}", trace=traceback.format_exc())
        return {"entry": entry, "rows": []}

    if job.save_datasets:
        ds = run_dir / "datasets"
        ds.mkdir(exist_ok=True)
        for k, data in enumerate(result.world.client_data):
            containers.save_dataset(data, ds / f"client{k}_noisy.rhds")
            containers.save_dataset(data.with_labels(result.world.clean_labels[k]), ds / f"client{k}_clean.rhds")
        containers.save_dataset(result.world.test, ds / "test.rhds")
        containers.save_dataset(result.world.public, ds / "public.rhds")

    rows = metrics_rows(job, result)
    (run_dir / "metrics.csv").write_text(_csv_text(rows), encoding="utf-8")
    final = result.records[-1]
    pretrain_last = [r for r in result.records if r.phase == "pretrain"][-1]
    entry.update(
        status="ok",
        final_accuracy=final.accuracies,
        average_accuracy=float(np.mean(final.accuracies)),
        pretrain_accuracy=pretrain_last.accuracies,
        pretrain_average_accuracy=float(np.mean(pretrain_last.accuracies)),
        realized_noise=result.world.realized_noise,
        architectures=[c.arch.name for c in result.clients],
    )
    return {"entry": entry, "rows": rows}


def plan_jobs(spec: ExperimentSpec, out_dir: Path, seeds=None) -> list[RunJob]:
    seeds = tuple(spec.seeds if seeds is None else seeds)
    jobs = []
    for i, (point, cfg) in enumerate(spec.grid()):
        for s in seeds:
            run_id = f"p{i:03d}-s{s}"
            jobs.append(RunJob(run_id, s, point, cfg, str(out_dir / "runs" / run_id),
                               spec.checkpoints, spec.save_datasets))
    return jobs


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("RHFL_THREADS", "1")))
    except ValueError:
        return 1


def run_experiment(spec: ExperimentSpec, out_dir=None, seeds=None) -> tuple[int, list[dict[str, Any]]]:
    """Run every grid point x seed; return (exit status, summary entries).

    Writes ``metrics.csv`` (all runs, grid order), ``summary.json`` and the
    resolved ``config.toml`` into ``out_dir``, plus one directory per run.
    """
    out = Path(out_dir if out_dir is not None else spec.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    if seeds is not None:
        spec = replace(spec, seeds=tuple(seeds))
    (out / "config.toml").write_text(dumps(spec), encoding="utf-8")
    jobs = plan_jobs(spec, out)
    workers = min(_threads(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(execute_run, jobs))
    else:
        results = [execute_run(job) for job in jobs]

    all_rows = [row for r in results for row in r["rows"]]
    (out / "metrics.csv").write_text(_csv_text(all_rows), encoding="utf-8")
    entries = [r["entry"] for r in results]
    failed = sum(e["status"] != "ok" for e in entries)
    summary = {"schema": METRICS_SCHEMA, "runs": len(entries), "failed": failed,
               "entries": [{k: v for k, v in e.items() if k != "trace"} for e in entries]}
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    return (1 if failed else 0), entries


def ablation_sweep(base: ExperimentSpec, out_dir=None, seeds=None) -> tuple[int, list[dict[str, Any]]]:
    """Run the six component presets for every non-ablation grid cell.

    Writes ``ablation.csv`` next to the usual outputs: one row per
    (cell, preset) with seed-averaged per-client and average final accuracy.
    """
    sweep = tuple((a, v) for a, v in base.sweep if a not in ABLATION_AXES)
    sweep += (("ablation", tuple(ABLATION_PRESETS)),)
    spec = replace(base, sweep=sweep)
    status, entries = run_experiment(spec, out_dir, seeds)
    out = Path(out_dir if out_dir is not None else spec.output_dir)

    cell_axes = [a for a, _ in sweep if a != "ablation"]
    groups: dict[tuple, list[dict]] = defaultdict(list)
    for e in entries:
        if e["status"] == "ok":
            key = tuple(e["point"].get(a) for a in cell_axes) + (e["point"]["ablation"],)
            groups[key].append(e)

    k = spec.federation.train.clients
    header = [*(a.replace(".", "_") for a in cell_axes), "hfl", "sl", "dlr", "eccr",
              *(f"acc_client{i}" for i in range(k)), "avg", "seeds"]
    rows = []
    for point, _cfg in spec.grid():
        key = tuple(point.get(a) for a in cell_axes) + (point["ablation"],)
        runs = groups.get(key, [])
        flags = ABLATION_PRESETS[point["ablation"]]
        if runs:
            per_client = np.mean([r["final_accuracy"] for r in runs], axis=0).tolist()
            avg = float(np.mean([r["average_accuracy"] for r in runs]))
        else:
            per_client, avg = [None] * k, None
        rows.append([*(point.get(a) for a in cell_axes), flags.hfl, flags.sl, flags.dlr, flags.eccr,
                     *per_client, avg, len(runs)])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows([[_fmt(v) for v in row] for row in rows])
    (out / "ablation.csv").write_text(buf.getvalue(), encoding="utf-8")
    return status, entries


def read_metrics(path) -> list[dict[str, str]]:
    """Parse a metrics file, checking the header and every row's width."""
    text = Path(path).read_text(encoding="utf-8")
    if not text.strip():
        return []
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if tuple(header) != METRICS_HEADER:
        raise FormatError(f"{path}:1: unexpected metrics header")
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if len(row) != len(METRICS_HEADER):
            raise FormatError(f"{path}:{lineno}: expected {len(METRICS_HEADER)} fields, got {len(row)}")
        rec = dict(zip(METRICS_HEADER, row))
        try:
            int(rec["round"]), int(rec["client"]), float(rec["accuracy"]), float(rec["sl_loss"])
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from exc
        if rec["phase"] not in ("pretrain", "round"):
            raise FormatError(f"{path}:{lineno}: unknown phase {rec['phase']!r}")
        rows.append(rec)
    return rows


def emit_plot_data(metrics_path, out_dir=None) -> list[Path]:
    """Write one loss curve and one accuracy curve per (run, client).

    Each curve has columns ``step,phase,round,value`` where ``step`` counts
    pretrain epochs then rounds, and ``value`` is copied verbatim from the
    metrics file.
    """
    metrics_path = Path(metrics_path)
    rows = read_metrics(metrics_path)
    out = Path(out_dir) if out_dir is not None else metrics_path.parent / "curves"
    series: dict[tuple[str, str], list[dict[str, str]]] = defaultdict(list)
    for rec in rows:
        series[(rec["run"], rec["client"])].append(rec)
    written = []
    if series:
        out.mkdir(parents=True, exist_ok=True)
    for (run, client), recs in series.items():
        for column, tag in (("sl_loss", "loss"), ("accuracy", "accuracy")):
            path = out / f"{run}_client{client}_{tag}.csv"
            lines = ["step,phase,round,value"]
            lines += [f"{i},{r['phase']},{r['round']},{r[column]}" for i, r in enumerate(recs, start=1)]
            path.write_text("\n".join(lines) + "\n", encoding="utf-8")
            written.append(path)
    return written
