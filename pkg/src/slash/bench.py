"""Benchmark harness: run the solving modes side by side on one task and
emit per-batch metrics plus a summary with speedups against exact mode.

The metrics CSV schema is fixed:
epoch,batch,mode,num_queries,mean_gamma,mean_solutions,solve_ms,grad_ms,update_ms,test_acc
with test_acc blank except on the last batch row of each epoch.  Timing
columns measure wall time; ``timer="off"`` blanks them for byte-stable
comparisons between runs.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import learning, wmc
from .ground import GroundProgram, ground
from .lang import parse_program
from .npp import NppQueryKind, SoftmaxLinearNpp, TabularJointNpp, npp_forward
from .records import QueryRecord, load_records

__all__ = [
    "METRICS_HEADER",
    "eval_accuracy",
    "build_models",
    "write_metrics_csv",
    "run_training",
    "bench",
    "BenchResult",
]

log = logging.getLogger(__name__)

METRICS_HEADER = ["epoch", "batch", "mode", "num_queries", "mean_gamma",
                  "mean_solutions", "solve_ms", "grad_ms", "update_ms",
                  "test_acc"]


def eval_accuracy(models: dict, gp: GroundProgram, records: list) -> float:
    """Fraction of labelled instances whose most probable outcome matches.

    Prediction is the argmax of the conditional outcome distribution given
    the instance's data, ties broken toward the lowest index.
    """
    by_key = {npp.instance_key: npp for npp in gp.npps}
    correct = 0
    total = 0
    for record in records:
        if not record.labels:
            raise ValueError(f"record {record.id} carries no labels")
        for key, label in record.labels.items():
            npp = by_key[key]
            data = record.data.get(key)
            probs = npp_forward(models[npp.name],
                                NppQueryKind.COND_CLASS_GIVEN_DATA, data)
            predicted = npp.outcomes[int(np.argmax(probs))]
            correct += int(predicted == label)
            total += 1
    if total == 0:
        raise ValueError("no labelled instances to evaluate")
    return correct / total


def build_models(program_text: str, records: list,
                 npp_kind: str = "softmax", n_bins: int = 10) -> dict:
    """One zero-initialized model per declared NPP name.

    Feature width comes from the records; integer data selects the tabular
    joint model when ``npp_kind`` is ``auto``.
    """
    from .lang import npp_signatures
    program = parse_program(program_text)
    sigs = npp_signatures(program)
    sample_by_name: dict = {}
    gp = ground(program)
    key_to_name = {npp.instance_key: npp.name for npp in gp.npps}
    for record in records:
        for key, value in record.data.items():
            name = key_to_name.get(key)
            if name is not None and name not in sample_by_name:
                sample_by_name[name] = value
    models: dict = {}
    for name, (_, outcomes) in sigs.items():
        sample = sample_by_name.get(name)
        kind = npp_kind
        if kind == "auto":
            kind = "tabular" if isinstance(sample, int) else "softmax"
        if kind == "tabular":
            models[name] = TabularJointNpp(n_bins, len(outcomes))
        elif kind == "softmax":
            if not isinstance(sample, (list, tuple)):
                raise ValueError(
                    f"softmax model for {name} needs feature-vector data")
            models[name] = SoftmaxLinearNpp(len(outcomes), len(sample))
        else:
            raise ValueError(f"unknown npp kind {npp_kind!r}")
    return models


def _format_cell(value, spec: str) -> str:
    if value is None:
        return ""
    return format(value, spec)


def write_metrics_csv(rows: list, path, timer: str = "wall") -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(METRICS_HEADER)
        for row in rows:
            times = (row.solve_ms, row.grad_ms, row.update_ms)
            if timer == "off":
                times = (None, None, None)
            writer.writerow([
                row.epoch, row.batch, row.mode, row.num_queries,
                _format_cell(row.mean_gamma, ".12g"),
                _format_cell(row.mean_solutions, ".12g"),
                _format_cell(times[0], ".3f"),
                _format_cell(times[1], ".3f"),
                _format_cell(times[2], ".3f"),
                _format_cell(row.test_acc, ".6f"),
            ])


def write_shrinkage_csv(prune_state, path) -> None:
    """Per-epoch potential-solution counts: epoch,mean_solutions,min,max."""
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["epoch", "mean_solutions", "min", "max"])
        for epoch, counts in enumerate(prune_state.epoch_solution_counts, 1):
            if counts:
                writer.writerow([epoch, format(np.mean(counts), ".12g"),
                                 min(counts), max(counts)])
            else:
                writer.writerow([epoch, "", "", ""])


def run_training(program_text: str, train_records: list, test_records: list,
                 cfg: learning.TrainConfig, models: Optional[dict] = None,
                 npp_kind: str = "softmax") -> tuple:
    """Ground the task once, train, and return (models, trace, gp)."""
    program = parse_program(program_text)
    gp = ground(program)
    if models is None:
        models = build_models(program_text, train_records, npp_kind)
    eval_fn = None
    if test_records:
        eval_fn = lambda m: eval_accuracy(m, gp, test_records)
    trace = learning.coordinate_descent(gp, models, train_records, cfg,
                                        eval_fn=eval_fn)
    return models, trace, gp


# --------------------------------------------------------------------------
# Mode comparison
# --------------------------------------------------------------------------

@dataclass
class BenchResult:
    task: str
    per_mode: dict = field(default_factory=dict)
    # mode -> {"accuracy", "mean_epoch_s", "speedup_vs_exact", "status"}


def bench(task: str, program_text: str, train_records: list,
          test_records: list, modes: list, cfg: learning.TrainConfig,
          out_dir, timer: str = "wall",
          npp_kind: str = "softmax") -> BenchResult:
    """Train every mode on identical data and seed; one metrics CSV per mode
    plus a summary table.  A crashing mode is marked FAILED and skipped."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    result = BenchResult(task=task)

    for mode in modes:
        entry = {"accuracy": None, "mean_epoch_s": None,
                 "speedup_vs_exact": None, "status": "OK"}
        try:
            mode_cfg = learning.TrainConfig(
                epochs=cfg.epochs, batch_size=cfg.batch_size,
                learning_rate=cfg.learning_rate, seed=cfg.seed, mode=mode,
                k=cfg.k, threshold=cfg.threshold, same_rule=cfg.same_rule,
                same_fallback=cfg.same_fallback,
                entailment_scaling=cfg.entailment_scaling,
                optimizer=cfg.optimizer, threads=cfg.threads,
                solution_budget=cfg.solution_budget)
            t0 = time.perf_counter()
            _, trace, _ = run_training(program_text, train_records,
                                       test_records, mode_cfg,
                                       npp_kind=npp_kind)
            elapsed = time.perf_counter() - t0
            write_metrics_csv(trace.rows, out_dir / f"metrics_{mode}.csv",
                              timer=timer)
            entry["accuracy"] = trace.final_test_acc
            entry["mean_epoch_s"] = elapsed / cfg.epochs
        except Exception:
            log.exception("mode %s failed", mode)
            entry["status"] = "FAILED"
        result.per_mode[mode] = entry

    exact = result.per_mode.get("exact")
    if exact and exact["status"] == "OK":
        for mode, entry in result.per_mode.items():
            if entry["status"] == "OK" and entry["mean_epoch_s"]:
                entry["speedup_vs_exact"] = \
                    exact["mean_epoch_s"] / entry["mean_epoch_s"]

    with open(out_dir / "summary.csv", "w", encoding="utf-8",
              newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["task", "mode", "accuracy", "mean_epoch_s",
                         "speedup_vs_exact", "status"])
        for mode, entry in result.per_mode.items():
            epoch_s = None if timer == "off" else entry["mean_epoch_s"]
            speedup = None if timer == "off" else entry["speedup_vs_exact"]
            writer.writerow([
                task, mode,
                _format_cell(entry["accuracy"], ".6f"),
                _format_cell(epoch_s, ".3f"),
                _format_cell(speedup, ".3f"),
                entry["status"]])
    return result
