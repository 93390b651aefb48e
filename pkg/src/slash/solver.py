"""Stable-model enumeration for stratified ground programs.

Every NPP contributes an exactly-one choice over its active outcomes; the
non-choice remainder is stratified, so each choice assignment induces one
stable model, computed stratum by stratum as a least fixpoint.  Enumeration
walks assignments depth-first in canonical (lexicographic) order.  For the
common case of negation-free rule bodies the walk shares derivations between
siblings through a trail: each level adds one choice atom, propagates rule
firings with per-rule counters, and undoes exactly its own additions on
backtracking.  Programs with negation in rule bodies fall back to one
fixpoint per assignment, which yields identical output.
"""

from __future__ import annotations

import dataclasses
import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .ground import GroundConstraint, GroundProgram

__all__ = [
    "PotentialSolution",
    "SolveBudgetError",
    "fixpoint_eval",
    "enumerate_solutions",
    "topk_solutions",
]

DEFAULT_SOLUTION_BUDGET = 10 ** 6


class SolveBudgetError(Exception):
    def __init__(self, budget: int, label: str = ""):
        self.label = label
        suffix = f" for query {label}" if label else ""
        super().__init__(f"solution budget exceeded ({budget}){suffix}")


@dataclass(frozen=True)
class PotentialSolution:
    """One stable model: outcome choice per NPP plus the induced atom set."""
    assignment: tuple
    atoms: frozenset
    prob: Optional[float] = None

    def with_prob(self, prob: float) -> "PotentialSolution":
        return dataclasses.replace(self, prob=prob)


# --------------------------------------------------------------------------
# Single-assignment evaluation
# --------------------------------------------------------------------------

def _rules_by_stratum(gp: GroundProgram) -> list:
    order = sorted(set(gp.strata.values()))
    index = {s: i for i, s in enumerate(order)}
    groups: list = [[] for _ in order]
    for rule in gp.rules:
        pred = gp.atoms.keys[rule.head][0]
        groups[index[gp.strata[pred]]].append(rule)
    return groups


def _fixpoint(groups: list, start: set) -> set:
    model = start
    for layer in groups:
        changed = True
        while changed:
            changed = False
            for rule in layer:
                if rule.head in model:
                    continue
                if all(a in model for a in rule.pos) and \
                        not any(a in model for a in rule.neg):
                    model.add(rule.head)
                    changed = True
    return model


def fixpoint_eval(gp: GroundProgram, assignment: Iterable) -> frozenset:
    """Unique stable model for one choice assignment (outcome index per NPP)."""
    assignment = tuple(assignment)
    if len(assignment) != len(gp.npps):
        raise ValueError("assignment length must match the number of NPPs")
    start = set(gp.facts)
    for npp, j in zip(gp.npps, assignment):
        if not npp.active[j]:
            raise ValueError(
                f"outcome {j} of {npp.name}({npp.instance_key}) is masked off")
        start.add(npp.atom_ids[j])
    return frozenset(_fixpoint(_rules_by_stratum(gp), start))


def _violates(constraint: GroundConstraint, model) -> bool:
    return all(a in model for a in constraint.pos) and \
        not any(a in model for a in constraint.neg)


# --------------------------------------------------------------------------
# Enumeration
# --------------------------------------------------------------------------

def enumerate_solutions(gp: GroundProgram,
                        extra_constraints: Iterable = (),
                        budget: int = DEFAULT_SOLUTION_BUDGET,
                        label: str = "") -> list:
    """All stable models over active outcomes satisfying every constraint,
    in canonical (lexicographic-assignment) order."""
    constraints = tuple(gp.constraints) + tuple(extra_constraints)
    active = [[int(j) for j in np.flatnonzero(npp.active)] for npp in gp.npps]
    if all(not rule.neg for rule in gp.rules):
        return _enumerate_trail(gp, constraints, active, budget, label)
    return _enumerate_fixpoint(gp, constraints, active, budget, label)


def _enumerate_fixpoint(gp, constraints, active, budget, label) -> list:
    groups = _rules_by_stratum(gp)
    solutions = []
    for combo in itertools.product(*active):
        start = set(gp.facts)
        for npp, j in zip(gp.npps, combo):
            start.add(npp.atom_ids[j])
        model = _fixpoint(groups, start)
        if any(_violates(c, model) for c in constraints):
            continue
        solutions.append(PotentialSolution(combo, frozenset(model)))
        if len(solutions) > budget:
            raise SolveBudgetError(budget, label)
    return solutions


def _enumerate_trail(gp, constraints, active, budget, label) -> list:
    n_atoms = len(gp.atoms)
    heads = [r.head for r in gp.rules]
    counters = [len(r.pos) for r in gp.rules]
    occ: list = [[] for _ in range(n_atoms)]
    for idx, rule in enumerate(gp.rules):
        for a in rule.pos:
            occ[a].append(idx)

    # all-positive constraints can kill a branch as soon as they fill up
    eager = [c for c in constraints if c.pos and not c.neg]
    ccount = [len(c.pos) for c in eager]
    cocc: list = [[] for _ in range(n_atoms)]
    for idx, c in enumerate(eager):
        for a in c.pos:
            cocc[a].append(idx)
    if any(not c.pos and not c.neg for c in constraints):
        return []                    # empty constraint is always violated

    leafcheck = [c for c in constraints if c.neg or not c.pos]

    true = bytearray(n_atoms)
    trail: list = []

    def propagate(atom: int) -> bool:
        """Make ``atom`` true with all consequences; False when an eager
        constraint fires.  The trail records every flip for exact undo."""
        ok = True
        stack = [atom]
        while stack:
            a = stack.pop()
            if true[a]:
                continue
            true[a] = 1
            trail.append(a)
            for r in occ[a]:
                counters[r] -= 1
                if counters[r] == 0 and not true[heads[r]]:
                    stack.append(heads[r])
            for ci in cocc[a]:
                ccount[ci] -= 1
                if ccount[ci] == 0:
                    ok = False
        return ok

    def undo(mark: int) -> None:
        while len(trail) > mark:
            a = trail.pop()
            true[a] = 0
            for r in occ[a]:
                counters[r] += 1
            for ci in cocc[a]:
                ccount[ci] += 1

    root_ok = True
    for a in gp.facts:
        root_ok = propagate(a) and root_ok
    for idx, count in enumerate(counters):
        if count == 0 and not true[heads[idx]]:
            root_ok = propagate(heads[idx]) and root_ok

    solutions: list = []
    n_levels = len(gp.npps)
    assignment = [0] * n_levels

    def walk(level: int) -> None:
        if level == n_levels:
            for c in leafcheck:
                if all(true[a] for a in c.pos) and \
                        not any(true[a] for a in c.neg):
                    return
            if any(x == 0 for x in ccount):
                return
            solutions.append(PotentialSolution(
                tuple(assignment), frozenset(trail)))
            if len(solutions) > budget:
                raise SolveBudgetError(budget, label)
            return
        for j in active[level]:
            assignment[level] = j
            mark = len(trail)
            if propagate(gp.npps[level].atom_ids[j]):
                walk(level + 1)
            undo(mark)

    if root_ok:
        walk(0)
    return solutions


# --------------------------------------------------------------------------
# Top-k selection
# --------------------------------------------------------------------------

def topk_solutions(solutions: list, k: int) -> list:
    """The k most probable solutions, scored in log space, ties kept in
    canonical assignment order."""
    if k < 1:
        raise ValueError("k must be a positive integer")

    def score(sol: PotentialSolution) -> float:
        if sol.prob is None:
            raise ValueError("solution probabilities must be filled first")
        return math.log(sol.prob) if sol.prob > 0.0 else -math.inf

    ranked = sorted(solutions, key=lambda s: (-score(s), s.assignment))
    return ranked[:k]
