"""Independent brute-force oracles and a random stratified-program generator.

The oracle enumerates every outcome combination, proposes a model with a
plain stratified evaluator written separately from the engine, certifies it
with a Gelfond-Lifschitz reduct check (the least model of the reduct must
equal the candidate), filters by constraints, and sums probabilities as
plain products.  Nothing here touches the engine's solver or WMC internals.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from slash.ground import GroundProgram


# --------------------------------------------------------------------------
# Naive stable-model machinery
# --------------------------------------------------------------------------

def naive_strata(gp: GroundProgram) -> dict:
    preds = sorted({key[0] for key in gp.atoms.keys})
    strata = {p: 0 for p in preds}
    for _ in range(len(preds) + 1):
        changed = False
        for rule in gp.rules:
            head = gp.atoms.keys[rule.head][0]
            for a in rule.pos:
                if strata[head] < strata[gp.atoms.keys[a][0]]:
                    strata[head] = strata[gp.atoms.keys[a][0]]
                    changed = True
            for a in rule.neg:
                if strata[head] < strata[gp.atoms.keys[a][0]] + 1:
                    strata[head] = strata[gp.atoms.keys[a][0]] + 1
                    changed = True
        if not changed:
            return strata
    raise AssertionError("oracle: program not stratified")


def naive_candidate(gp: GroundProgram, base: set) -> set:
    """Stratum-by-stratum evaluation by repeated full scans."""
    strata = naive_strata(gp)
    model = set(base)
    for level in sorted(set(strata.values())):
        layer = [r for r in gp.rules
                 if strata[gp.atoms.keys[r.head][0]] == level]
        while True:
            added = False
            for rule in layer:
                if rule.head in model:
                    continue
                if set(rule.pos) <= model and not set(rule.neg) & model:
                    model.add(rule.head)
                    added = True
            if not added:
                break
    return model


def least_model_of_reduct(gp: GroundProgram, base: set, candidate: set) -> set:
    """Least model of the GL reduct of the rules w.r.t. the candidate."""
    reduct = [(r.head, r.pos) for r in gp.rules
              if not set(r.neg) & candidate]
    model = set(base)
    while True:
        added = False
        for head, pos in reduct:
            if head not in model and set(pos) <= model:
                model.add(head)
                added = True
        if not added:
            return model


def is_stable_model(gp: GroundProgram, base: set, candidate: set) -> bool:
    return least_model_of_reduct(gp, base, candidate) == candidate


def oracle_solutions(gp: GroundProgram, extra_constraints=()) -> list:
    """(combo, model) per satisfying outcome combination, reduct-certified."""
    constraints = tuple(gp.constraints) + tuple(extra_constraints)
    spaces = [[j for j in range(len(npp.outcomes)) if npp.active[j]]
              for npp in gp.npps]
    out = []
    for combo in itertools.product(*spaces):
        base = set(gp.facts)
        for npp, j in zip(gp.npps, combo):
            base.add(npp.atom_ids[j])
        model = naive_candidate(gp, base)
        assert is_stable_model(gp, base, model), \
            "oracle candidate failed the reduct certificate"
        violated = False
        for c in constraints:
            if set(c.pos) <= model and not set(c.neg) & model:
                violated = True
                break
        if not violated:
            out.append((combo, model))
    return out


def oracle_query_prob(gp: GroundProgram, extra_constraints=()) -> float:
    total = []
    for combo, _ in oracle_solutions(gp, extra_constraints):
        p = 1.0
        for npp, j in zip(gp.npps, combo):
            p *= float(npp.probs[j])
        total.append(p)
    return math.fsum(total)


def oracle_alpha(gp: GroundProgram, npp_index: int,
                 extra_constraints=()) -> np.ndarray:
    """Brute-force partial derivative of the query's multilinear polynomial
    with respect to the outcome probabilities of one NPP: for outcome j, the
    sum over satisfying combinations choosing j of the product of all other
    chosen probabilities."""
    n = len(gp.npps[npp_index].outcomes)
    partial = np.zeros(n)
    for combo, _ in oracle_solutions(gp, extra_constraints):
        p = 1.0
        for idx, (npp, j) in enumerate(zip(gp.npps, combo)):
            if idx != npp_index:
                p *= float(npp.probs[j])
        partial[combo[npp_index]] += p
    return partial


# --------------------------------------------------------------------------
# Random stratified programs with NPPs
# --------------------------------------------------------------------------

def random_program(rng: np.random.Generator, max_npps: int = 3,
                   max_outcomes: int = 10) -> dict:
    """Random program text, per-NPP probability tables, and a query.

    Rules are stratified by construction: negation only reaches predicates
    of strictly lower levels (facts and NPP atoms sit at level zero).
    """
    n_npps = int(rng.integers(1, max_npps + 1))
    outcome_counts = [int(rng.integers(2, max_outcomes + 1))
                      for _ in range(n_npps)]
    lines = []
    n_facts = int(rng.integers(0, 3))
    for i in range(n_facts):
        lines.append(f"f{i}.")
    for k, m in enumerate(outcome_counts):
        lines.append(f"npp(n{k}(c{k}),[0..{m - 1}]).")

    n_derived = int(rng.integers(0, 5))
    levels = {f"d{j}": int(rng.integers(1, 4)) for j in range(n_derived)}

    def random_literal(max_level: int, allow_negation: bool) -> str:
        kinds = ["npp"]
        if n_facts:
            kinds.append("fact")
        lower = [d for d, lvl in levels.items() if lvl <= max_level]
        strictly = [d for d, lvl in levels.items() if lvl < max_level]
        if lower:
            kinds.append("derived")
        kind = kinds[rng.integers(0, len(kinds))]
        if kind == "npp":
            k = int(rng.integers(0, n_npps))
            v = int(rng.integers(0, outcome_counts[k]))
            text = f"n{k}(c{k},{v})"
        elif kind == "fact":
            text = f"f{int(rng.integers(0, n_facts))}"
        else:
            text = lower[rng.integers(0, len(lower))]
        if allow_negation and rng.random() < 0.3:
            if kind == "derived":
                if text not in strictly:
                    return text      # same level: keep it positive
            return f"not {text}"
        return text

    for name, level in levels.items():
        for _ in range(int(rng.integers(1, 3))):
            n_lits = int(rng.integers(1, 4))
            body = ", ".join(random_literal(level, True)
                             for _ in range(n_lits))
            lines.append(f"{name} :- {body}.")

    # occasionally a variable rule filtered by a comparison over outcomes
    if rng.random() < 0.4:
        k = int(rng.integers(0, n_npps))
        bound = int(rng.integers(0, outcome_counts[k]))
        op = [">=", "<", "!="][rng.integers(0, 3)]
        lines.append(f"dv :- n{k}(c{k},V), V {op} {bound}.")
        levels["dv"] = 1

    for _ in range(int(rng.integers(0, 3))):
        n_lits = int(rng.integers(1, 3))
        body = ", ".join(random_literal(3, True) for _ in range(n_lits))
        lines.append(f":- {body}.")

    n_lits = int(rng.integers(1, 3))
    query = ":- " + ", ".join(random_literal(3, True)
                              for _ in range(n_lits)) + "."

    probs = {f"n{k}": rng.dirichlet(np.ones(m))
             for k, m in enumerate(outcome_counts)}
    return {"text": "\n".join(lines) + "\n", "query": query, "probs": probs}
