"""Probability semantics: weight of a solution, of a query, of a query set.

A solution's probability is the product of the chosen outcome probabilities
of every ground NPP, divided by the number of potential solutions agreeing
on the full NPP assignment.  Under the stratification restriction that count
is exactly one, which is asserted rather than assumed.  Pruned outcomes keep
their raw probabilities: masking discards mass, it never renormalizes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .ground import GroundProgram
from .npp import NppModel, NppQueryKind, npp_forward
from .solver import PotentialSolution

__all__ = [
    "QueryProbability",
    "solution_prob",
    "query_prob",
    "query_set_prob",
    "query_set_log_prob",
    "with_solution_probs",
    "with_npp_probabilities",
    "with_uniform_probabilities",
]

LOG_FLOOR = 1e-12


@dataclass
class QueryProbability:
    value: float
    per_solution: list = field(default_factory=list)   # (solution, prob)
    normalization_counts: list = field(default_factory=list)

    def check(self) -> None:
        total = math.fsum(p for _, p in self.per_solution)
        assert abs(self.value - total) <= 1e-12
        assert self.value <= 1.0 + 1e-9
        assert all(c >= 1 for c in self.normalization_counts)


def solution_prob(solution: PotentialSolution, gp: GroundProgram) -> float:
    """Product of the chosen outcomes' raw probabilities over all NPPs."""
    prob = 1.0
    for npp, j in zip(gp.npps, solution.assignment):
        if npp.probs is None:
            raise ValueError(
                f"no probability vector bound to {npp.name}({npp.instance_key})")
        prob *= float(npp.probs[j])
    return prob


def with_solution_probs(solutions: Iterable, gp: GroundProgram) -> list:
    filled = [sol.with_prob(solution_prob(sol, gp)) for sol in solutions]
    # the agreement count of the potential-solution normalization: with a
    # stratified remainder each full assignment induces one model, so the
    # divisor is 1 -- verified here on every call
    assert len({sol.assignment for sol in filled}) == len(filled), \
        "distinct solutions share an NPP assignment"
    return filled


def query_prob(solutions: Iterable) -> QueryProbability:
    """Success probability of a query given its satisfying solutions."""
    per_solution = []
    for sol in solutions:
        if sol.prob is None:
            raise ValueError("solution probabilities must be filled first")
        per_solution.append((sol, sol.prob))
    value = math.fsum(p for _, p in per_solution)
    result = QueryProbability(
        value=value,
        per_solution=per_solution,
        normalization_counts=[1] * len(per_solution))
    result.check()
    return result


def query_set_prob(queries: Iterable) -> float:
    """Product of the per-query success probabilities (1.0 when empty)."""
    product = 1.0
    for q in queries:
        product *= _value_of(q)
    return product


def query_set_log_prob(queries: Iterable) -> tuple:
    """Sum of log probabilities with values floored at 1e-12; the second
    element lists the indices of queries that hit the floor."""
    total = 0.0
    floored = []
    for idx, q in enumerate(queries):
        value = _value_of(q)
        if value < LOG_FLOOR:
            value = LOG_FLOOR
            floored.append(idx)
        total += math.log(value)
    return total, floored


def _value_of(q) -> float:
    return q.value if isinstance(q, QueryProbability) else float(q)


# --------------------------------------------------------------------------
# Binding NPP model outputs to ground choice sets
# --------------------------------------------------------------------------

def with_npp_probabilities(gp: GroundProgram, models: dict,
                           data: Optional[dict] = None) -> GroundProgram:
    """Copy of ``gp`` whose NPPs carry probabilities from ``models``.

    ``data`` maps instance keys to whatever realization the NPP's query kind
    expects.  An NPP with no recorded +/- pattern answers the conditional
    when data for its instance is present and the prior otherwise.  Only
    outcome-axis kinds can fill a choice set: the in-model probabilities form
    a distribution over outcomes by construction.
    """
    data = data or {}
    npps = []
    for npp in gp.npps:
        model = models.get(npp.name)
        if model is None:
            raise KeyError(f"no model bound to NPP {npp.name}")
        sample = data.get(npp.instance_key)
        kind = npp.kind
        if kind is None:
            kind = (NppQueryKind.COND_CLASS_GIVEN_DATA
                    if sample is not None else NppQueryKind.PRIOR)
        if kind not in (NppQueryKind.COND_CLASS_GIVEN_DATA,
                        NppQueryKind.PRIOR):
            raise ValueError(
                f"query kind {kind.value} does not produce a distribution "
                f"over the outcomes of {npp.name}; choice sets need "
                "class-conditional or prior queries")
        if kind is NppQueryKind.COND_CLASS_GIVEN_DATA and sample is None:
            raise KeyError(
                f"no data for instance {npp.instance_key} of {npp.name}")
        probs = npp_forward(model, kind,
                            sample if kind is not NppQueryKind.PRIOR else None)
        if probs.shape != (len(npp.outcomes),):
            raise ValueError(
                f"model for {npp.name} returned {probs.shape[0]} outcome "
                f"probabilities, declaration has {len(npp.outcomes)}")
        new = npp.replace(probs=probs, kind=kind)
        new.check()
        npps.append(new)
    return gp.with_npps(npps)


def with_uniform_probabilities(gp: GroundProgram) -> GroundProgram:
    """Copy of ``gp`` with uniform outcome probabilities (untrained state)."""
    npps = []
    for npp in gp.npps:
        n = len(npp.outcomes)
        npps.append(npp.replace(probs=np.full(n, 1.0 / n)))
    return gp.with_npps(npps)
