"""Parameter learning from entailed queries.

The gradient of log P(Q) with respect to one NPP's outcome probabilities has
three ingredients per outcome j: the reward alpha_j (mass of satisfying
solutions choosing j, each divided by p_j), the penalty beta_j (the same for
solutions choosing any other outcome), and the normalization gamma = P(Q);
the component is (alpha_j - beta_j) / gamma.  Recomposing the masses,
sum_j alpha_j * p_j must equal gamma, which is asserted on every call.

Gradients flow into model parameters through the models' own backward
passes, are averaged over a batch, and applied as ascent on log P(Q).
Training alternates two phases per epoch: entailment updates with the NPP
likelihood frozen, then a likelihood ascent step for joint-capable models
with the entailment feedback frozen.
"""

from __future__ import annotations

import logging
import math
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

import numpy as np

from . import pruning, solver, wmc
from .ground import GroundProgram, ground_constraint
from .lang import parse_query
from .npp import NppModel, npp_backward, npp_loss_grad
from .solver import PotentialSolution

__all__ = [
    "SkippedQuery",
    "NppGradient",
    "GradientReport",
    "TrainConfig",
    "QueryTask",
    "BatchMetrics",
    "TrainTrace",
    "grad_logPQ",
    "entailment_update",
    "coordinate_descent",
]

log = logging.getLogger(__name__)

GAMMA_FLOOR = 1e-12
IDENTITY_TOL = 1e-9


class SkippedQuery(Exception):
    """Query probability at or below the floor: the positivity assumption
    P(Q) > 0 does not hold, so the gradient is undefined."""


@dataclass
class NppGradient:
    """Per-outcome reward/penalty/gradient for one ground NPP."""
    alpha: np.ndarray
    beta: np.ndarray
    grad: np.ndarray


@dataclass
class GradientReport:
    gamma: float
    per_npp: list                   # NppGradient, aligned with gp.npps


def grad_logPQ(solutions: Iterable, gp: GroundProgram) -> GradientReport:
    """Gradient of log P(Q) w.r.t. every NPP's outcome probabilities.

    ``solutions`` must be exactly the satisfying set of one query with
    probabilities filled.  Raises SkippedQuery when gamma is at the floor.
    """
    ordered = sorted(solutions, key=lambda s: s.assignment)
    gamma = math.fsum(s.prob for s in ordered)
    if gamma <= GAMMA_FLOOR:
        raise SkippedQuery(f"query probability {gamma:g} at or below floor")

    per_npp = []
    for idx, npp in enumerate(gp.npps):
        n = len(npp.outcomes)
        probs = npp.probs
        if probs is None:
            raise ValueError(
                f"no probabilities bound to {npp.name}({npp.instance_key})")
        mass = np.zeros(n)
        for sol in ordered:
            mass[sol.assignment[idx]] += sol.prob
        safe = probs > GAMMA_FLOOR
        alpha = np.where(safe, mass / np.where(safe, probs, 1.0), 0.0)
        beta = alpha.sum() - alpha
        grad = (alpha - beta) / gamma
        # recomposition identity: weighting each outcome's reward by its own
        # probability recovers exactly the satisfying mass, i.e. gamma
        recomposed = float((alpha * probs).sum())
        assert abs(recomposed - gamma) <= IDENTITY_TOL, (
            f"gradient identity violated for {npp.name}({npp.instance_key}): "
            f"sum alpha*p = {recomposed!r}, gamma = {gamma!r}")
        per_npp.append(NppGradient(alpha=alpha, beta=beta, grad=grad))
    return GradientReport(gamma=gamma, per_npp=per_npp)


# --------------------------------------------------------------------------
# Configuration
# --------------------------------------------------------------------------

@dataclass
class TrainConfig:
    epochs: int = 5
    batch_size: int = 16
    learning_rate: float = 0.1
    seed: int = 0
    mode: str = "exact"             # exact | topk | same
    k: int = 10
    threshold: float = 0.99
    same_rule: str = "cover"        # cover | leq
    same_fallback: str = "exact"    # exact | skip
    entailment_scaling: str = "plain"   # plain | loglik_weighted
    optimizer: str = "sgd"          # sgd | adam
    threads: int = 1
    solution_budget: int = solver.DEFAULT_SOLUTION_BUDGET

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning rate must be non-negative")
        if not 0.0 < self.threshold <= 1.0:
            raise ValueError("threshold must lie in (0, 1]")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.mode not in ("exact", "topk", "same"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.entailment_scaling not in ("plain", "loglik_weighted"):
            raise ValueError(
                f"unknown entailment scaling {self.entailment_scaling!r}")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.epochs < 1 or self.batch_size < 1 or self.threads < 1:
            raise ValueError("epochs, batch size and threads must be >= 1")


@dataclass
class QueryTask:
    """One solved query ready for gradient computation."""
    query_id: str
    gp: GroundProgram               # probabilities bound, masks applied
    solutions: list                 # satisfying set, probs filled
    inputs: list                    # per npp: (model name, kind, data)
    weight: float = 1.0             # entailment-scaling factor


def entailment_update(batch: Iterable, cfg: TrainConfig, models: dict) -> tuple:
    """Mean parameter gradient of log P(Q) over a batch of QueryTasks.

    Returns (grads, n_used, n_skipped) where grads maps model name to a dict
    of parameter-name -> gradient array.  Skipped queries (gamma at floor)
    are counted and the batch proceeds without them.
    """
    grads: dict = {}
    n_used = 0
    n_skipped = 0
    for task in batch:
        try:
            report = grad_logPQ(task.solutions, task.gp)
        except SkippedQuery:
            n_skipped += 1
            continue
        n_used += 1
        scale = task.weight if cfg.entailment_scaling == "loglik_weighted" else 1.0
        for npp_grad, (name, kind, data) in zip(report.per_npp, task.inputs):
            model = models[name]
            if not model.trainable:
                continue
            pgrad = npp_backward(model, data, npp_grad.grad, kind)
            bucket = grads.setdefault(name, {})
            for pname, arr in pgrad.items():
                scaled = arr * scale
                if pname in bucket:
                    bucket[pname] += scaled
                else:
                    bucket[pname] = scaled.astype(np.float64, copy=True)
    if n_used:
        for bucket in grads.values():
            for pname in bucket:
                bucket[pname] /= n_used
    return grads, n_used, n_skipped


# --------------------------------------------------------------------------
# Optimizers (ascent)
# --------------------------------------------------------------------------

class _Sgd:
    def step(self, models: dict, grads: dict, lr: float) -> None:
        for name, bucket in grads.items():
            params = models[name].parameters()
            for pname, g in bucket.items():
                params[pname] += lr * g


class _Adam:
    """ADAM moments on the ascent direction (beta1=0.9, beta2=0.999)."""

    def __init__(self, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m: dict = {}
        self.v: dict = {}
        self.t = 0

    def step(self, models: dict, grads: dict, lr: float) -> None:
        self.t += 1
        for name, bucket in grads.items():
            params = models[name].parameters()
            for pname, g in bucket.items():
                key = (name, pname)
                m = self.m.get(key)
                if m is None:
                    m = np.zeros_like(g)
                    self.v[key] = np.zeros_like(g)
                self.m[key] = m = self.beta1 * m + (1 - self.beta1) * g
                self.v[key] = v = self.beta2 * self.v[key] + \
                    (1 - self.beta2) * (g * g)
                m_hat = m / (1 - self.beta1 ** self.t)
                v_hat = v / (1 - self.beta2 ** self.t)
                params[pname] += lr * m_hat / (np.sqrt(v_hat) + self.eps)


def _make_optimizer(cfg: TrainConfig):
    return _Adam() if cfg.optimizer == "adam" else _Sgd()


# --------------------------------------------------------------------------
# Trainer
# --------------------------------------------------------------------------

@dataclass
class BatchMetrics:
    epoch: int
    batch: int
    mode: str
    num_queries: int
    mean_gamma: float
    mean_solutions: float
    solve_ms: float
    grad_ms: float
    update_ms: float
    test_acc: Optional[float] = None


@dataclass
class TrainTrace:
    rows: list = field(default_factory=list)
    skipped_queries: int = 0
    exact_fallbacks: int = 0
    lr_halvings: int = 0
    phase_b_skipped: bool = False
    epoch_mean_gamma: list = field(default_factory=list)
    prune_state: Optional[pruning.PruneState] = None
    final_test_acc: Optional[float] = None


def _solve_record(record, gp: GroundProgram, constraint_cache: dict,
                  models: dict, cfg: TrainConfig, state) -> QueryTask:
    """Ground, prune, enumerate and weight one query record."""
    cons = constraint_cache.get(record.id)
    if cons is None:
        cons = ground_constraint(gp, parse_query(record.constraint))
        constraint_cache[record.id] = cons

    bound = wmc.with_npp_probabilities(gp, models, record.data)
    solve_gp = bound
    if cfg.mode == "same":
        masks = [pruning.same_prune(npp, npp.probs, cfg.threshold,
                                    cfg.same_rule)
                 for npp in bound.npps]
        solve_gp = pruning.apply_masks(bound, masks)
        if state is not None:
            state.record_masks(masks, [npp.probs for npp in bound.npps])

    solutions = solver.enumerate_solutions(
        solve_gp, cons, budget=cfg.solution_budget, label=record.id)
    if not solutions and cfg.mode == "same" and cfg.same_fallback == "exact":
        solutions = solver.enumerate_solutions(
            bound, cons, budget=cfg.solution_budget, label=record.id)
        state.count_fallback()
    solutions = wmc.with_solution_probs(solutions, bound)
    if cfg.mode == "topk":
        solutions = solver.topk_solutions(solutions, cfg.k)

    inputs = []
    weight = 1.0
    loglik = 0.0
    any_loglik = False
    for npp in bound.npps:
        data = record.data.get(npp.instance_key)
        inputs.append((npp.name, npp.kind, data))
        model_ll = models[npp.name].data_log_likelihood(data) \
            if data is not None else None
        if model_ll is not None:
            loglik += model_ll
            any_loglik = True
    if cfg.entailment_scaling == "loglik_weighted" and any_loglik:
        weight = abs(loglik)
    return QueryTask(record.id, solve_gp, solutions, inputs, weight)


class _SolveState:
    """Mutable counters shared by the per-record solving closures."""

    def __init__(self, prune_state):
        self.prune = prune_state
        self.fallbacks = 0
        self._lock = threading.Lock()

    def count_fallback(self):
        with self._lock:
            self.fallbacks += 1

    def record_masks(self, masks, probs):
        if self.prune is not None:
            with self._lock:
                self.prune.record_masks(masks, probs)


def coordinate_descent(gp: GroundProgram, models: dict, train_records: list,
                       cfg: TrainConfig,
                       eval_fn: Optional[Callable] = None) -> TrainTrace:
    """Alternate entailment updates (phase A) with likelihood ascent for
    joint-capable models (phase B), epoch by epoch."""
    rng = np.random.default_rng(cfg.seed)
    optimizer = _make_optimizer(cfg)
    trace = TrainTrace()
    trace.prune_state = pruning.PruneState(cfg.threshold) \
        if cfg.mode == "same" else None
    state = _SolveState(trace.prune_state)
    constraint_cache: dict = {}
    lr = cfg.learning_rate

    joint_models = {name: m for name, m in models.items()
                    if m.trainable and m.joint_capable()}
    trace.phase_b_skipped = not joint_models

    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(train_records))
        epoch_gammas: list = []

        n_batches = math.ceil(len(order) / cfg.batch_size)
        for b in range(n_batches):
            idxs = order[b * cfg.batch_size:(b + 1) * cfg.batch_size]
            records = [train_records[i] for i in idxs]

            t0 = time.perf_counter()
            if cfg.threads > 1:
                with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
                    tasks = list(pool.map(
                        lambda r: _solve_record(r, gp, constraint_cache,
                                                models, cfg, state),
                        records))
            else:
                tasks = [_solve_record(r, gp, constraint_cache, models,
                                       cfg, state) for r in records]
            solve_ms = (time.perf_counter() - t0) * 1000.0

            if trace.prune_state is not None:
                for task in tasks:
                    trace.prune_state.record_query(len(task.solutions))

            t0 = time.perf_counter()
            grads, n_used, n_skipped = entailment_update(tasks, cfg, models)
            grad_ms = (time.perf_counter() - t0) * 1000.0
            trace.skipped_queries += n_skipped

            t0 = time.perf_counter()
            if n_used and lr > 0:
                optimizer.step(models, grads, lr)
            update_ms = (time.perf_counter() - t0) * 1000.0

            gammas = [math.fsum(s.prob for s in task.solutions)
                      for task in tasks]
            epoch_gammas.extend(gammas)
            trace.rows.append(BatchMetrics(
                epoch=epoch, batch=b + 1, mode=cfg.mode,
                num_queries=len(records),
                mean_gamma=float(np.mean(gammas)) if gammas else 0.0,
                mean_solutions=float(np.mean(
                    [len(t.solutions) for t in tasks])) if tasks else 0.0,
                solve_ms=solve_ms, grad_ms=grad_ms, update_ms=update_ms))

        # phase B: likelihood ascent for joint-capable models
        if joint_models:
            for name, model in joint_models.items():
                bins = _model_bins(gp, name, train_records)
                if not bins:
                    continue
                _, grad = npp_loss_grad(model, bins)
                model.parameters()["logits"] += lr * grad / len(bins)

        trace.exact_fallbacks = state.fallbacks
        trace.epoch_mean_gamma.append(
            float(np.mean(epoch_gammas)) if epoch_gammas else 0.0)
        if trace.prune_state is not None:
            trace.prune_state.end_epoch()

        if eval_fn is not None:
            trace.final_test_acc = float(eval_fn(models))
            trace.rows[-1].test_acc = trace.final_test_acc

        if _diverging(trace.epoch_mean_gamma):
            lr *= 0.5
            trace.lr_halvings += 1
            log.warning("mean query probability fell for 3 consecutive "
                        "epochs; halving learning rate to %g", lr)
    return trace


def _diverging(epoch_mean_gamma: list) -> bool:
    """Three consecutive drops in the epoch-mean query probability."""
    g = epoch_mean_gamma
    return len(g) >= 4 and g[-1] < g[-2] < g[-3] < g[-4]


def _model_bins(gp: GroundProgram, name: str, records: list) -> list:
    """All integer data bins that feed an NPP model across the records."""
    keys = [npp.instance_key for npp in gp.npps if npp.name == name]
    bins = []
    for record in records:
        for key in keys:
            value = record.data.get(key)
            if isinstance(value, int):
                bins.append(value)
    return bins
