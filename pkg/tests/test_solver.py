"""Solver tests: fixpoints, enumeration against the reduct-certified oracle,
top-k selection, and canonical ordering."""

import numpy as np
import pytest

from slash.ground import ground, ground_constraint
from slash.lang import parse_program, parse_query
from slash.npp import FixedTableNpp
from slash.pruning import apply_masks
from slash.solver import (SolveBudgetError, enumerate_solutions,
                          fixpoint_eval, topk_solutions)
from slash.wmc import (with_npp_probabilities, with_solution_probs,
                       with_uniform_probabilities)

from oracles import oracle_solutions, random_program

SUM2 = """
img(i1). img(i2).
npp(digit(X),[0..9]) :- img(X).
sum2(i1,i2,S) :- digit(+i1,-N1), digit(+i2,-N2), S = N1 + N2.
"""


def sum2_ground(query=None):
    gp = ground(parse_program(SUM2))
    cons = ground_constraint(gp, parse_query(query)) if query else ()
    return with_uniform_probabilities(gp), cons


class TestFixpoint:
    def test_positive_chain(self):
        gp = ground(parse_program("a. b :- a."))
        model = fixpoint_eval(gp, ())
        assert {gp.atoms.text(i) for i in model} == {"a", "b"}

    def test_blocked_by_negation(self):
        gp = ground(parse_program("p :- not q. q."))
        model = fixpoint_eval(gp, ())
        assert {gp.atoms.text(i) for i in model} == {"q"}

    def test_sum2_model_atoms(self):
        gp, _ = sum2_ground()
        model = fixpoint_eval(gp, (3, 7))
        texts = {gp.atoms.text(i) for i in model}
        assert texts == {"img(i1)", "img(i2)", "digit(i1,3)", "digit(i2,7)",
                         "sum2(i1,i2,10)"}

    def test_masked_outcome_rejected(self):
        gp, _ = sum2_ground()
        masks = [np.ones(10, dtype=bool), np.ones(10, dtype=bool)]
        masks[0][3] = False
        masked = apply_masks(gp, masks)
        with pytest.raises(ValueError):
            fixpoint_eval(masked, (3, 7))


class TestEnumerate:
    def test_sum_ten_has_nine_solutions(self):
        gp, cons = sum2_ground(":- not sum2(i1,i2,10).")
        sols = enumerate_solutions(gp, cons)
        assert [s.assignment for s in sols] == \
            [(d, 10 - d) for d in range(1, 10)]

    def test_sum_zero_unique(self):
        gp, cons = sum2_ground(":- not sum2(i1,i2,0).")
        sols = enumerate_solutions(gp, cons)
        assert [s.assignment for s in sols] == [(0, 0)]

    def test_sum_nineteen_impossible(self):
        gp, cons = sum2_ground(":- not sum2(i1,i2,19).")
        assert enumerate_solutions(gp, cons) == []

    def test_masked_sum_eighteen_empty(self):
        gp, cons = sum2_ground(":- not sum2(i1,i2,18).")
        masks = [np.ones(10, dtype=bool), np.ones(10, dtype=bool)]
        masks[0][9] = False
        masked = apply_masks(gp, masks)
        assert enumerate_solutions(masked, cons) == []
        assert len(enumerate_solutions(gp, cons)) == 1

    def test_budget_error_names_query(self):
        gp, cons = sum2_ground(":- not sum2(i1,i2,10).")
        with pytest.raises(SolveBudgetError) as err:
            enumerate_solutions(gp, cons, budget=3, label="q42")
        assert "q42" in str(err.value)

    def test_every_solution_satisfies_constraints(self):
        gp, cons = sum2_ground(":- not sum2(i1,i2,12).")
        for sol in enumerate_solutions(gp, cons):
            sum_atom = gp.atoms.id_of(("sum2", ("i1", "i2", 12)))
            assert sum_atom in sol.atoms

    def test_deterministic_across_runs(self):
        gp, cons = sum2_ground(":- not sum2(i1,i2,10).")
        a = enumerate_solutions(gp, cons)
        b = enumerate_solutions(gp, cons)
        assert [s.assignment for s in a] == [s.assignment for s in b]
        assert [s.atoms for s in a] == [s.atoms for s in b]


def bind_random(case):
    program = parse_program(case["text"])
    gp = ground(program)
    models = {name: FixedTableNpp(p) for name, p in case["probs"].items()}
    gp = with_npp_probabilities(gp, models)
    cons = ground_constraint(gp, parse_query(case["query"]))
    return gp, cons


def test_enumeration_matches_oracle_on_random_programs():
    rng = np.random.default_rng(123)
    for _ in range(150):
        case = random_program(rng)
        gp, cons = bind_random(case)
        engine = enumerate_solutions(gp, cons)
        oracle = oracle_solutions(gp, cons)
        assert [s.assignment for s in engine] == [c for c, _ in oracle]
        for sol, (_, model) in zip(engine, oracle):
            assert sol.atoms == frozenset(model)


def test_trail_and_fixpoint_paths_agree():
    # a program with negation forces the per-assignment fixpoint path;
    # rewriting the negation away must not change the solutions
    with_neg = parse_program(
        "npp(d(a),[0,1,2]). npp(e(b),[0,1]). "
        "p :- d(a,0). q :- e(b,1), not p. :- not q.")
    gp = with_uniform_probabilities(ground(with_neg))
    sols = enumerate_solutions(gp)
    assert [s.assignment for s in sols] == [(1, 1), (2, 1)]


class TestTopK:
    def make_solutions(self, probs_i1, probs_i2):
        gp, cons = sum2_ground(":- not sum2(i1,i2,10).")
        models = {"digit": None}
        npps = list(gp.npps)
        npps[0] = npps[0].replace(probs=np.asarray(probs_i1))
        npps[1] = npps[1].replace(probs=np.asarray(probs_i2))
        gp = gp.with_npps(npps)
        return gp, with_solution_probs(enumerate_solutions(gp, cons), gp)

    def test_top1_is_most_probable_pair(self):
        p1 = np.full(10, 0.5 / 9)
        p1[3] = 0.5
        p2 = np.full(10, 0.5 / 9)
        p2[7] = 0.5
        _, sols = self.make_solutions(p1, p2)
        top = topk_solutions(sols, 1)
        assert [s.assignment for s in top] == [(3, 7)]

    def test_k_at_least_count_is_identity(self):
        gp, cons = sum2_ground(":- not sum2(i1,i2,10).")
        sols = with_solution_probs(enumerate_solutions(gp, cons), gp)
        assert topk_solutions(sols, len(sols)) == sorted(
            sols, key=lambda s: s.assignment)
        assert set(topk_solutions(sols, 99)) == set(sols)

    def test_ties_kept_in_canonical_order(self):
        gp, cons = sum2_ground(":- not sum2(i1,i2,10).")
        sols = with_solution_probs(enumerate_solutions(gp, cons), gp)
        top = topk_solutions(list(reversed(sols)), 2)
        assert [s.assignment for s in top] == [(1, 9), (2, 8)]

    def test_k_zero_rejected(self):
        with pytest.raises(ValueError):
            topk_solutions([], 0)


def test_restricting_both_digits_leaves_one_solution():
    gp, cons = sum2_ground(":- not sum2(i1,i2,10).")
    masks = [np.zeros(10, dtype=bool), np.zeros(10, dtype=bool)]
    masks[0][3] = True
    masks[1][7] = True
    sols = enumerate_solutions(apply_masks(gp, masks), cons)
    assert [s.assignment for s in sols] == [(3, 7)]


def test_variable_query_quantifies_over_instances():
    # a query with a variable grounds to one constraint per instance and
    # every instance must hold
    program = parse_program(
        "obj(o1). obj(o2). npp(name(X),[goat,rock,clouds]) :- obj(X). "
        "target(X) :- name(+X,-goat).")
    gp = with_uniform_probabilities(ground(program))
    cons = ground_constraint(gp, parse_query(":- obj(O), not target(O)."))
    assert len(cons) == 2
    sols = enumerate_solutions(gp, cons)
    assert [s.assignment for s in sols] == [(0, 0)]
    # one forced object alone still leaves the other free
    single = ground_constraint(gp, parse_query(":- not target(o1)."))
    assert len(enumerate_solutions(gp, single)) == 3


def test_masking_monotonicity_random():
    rng = np.random.default_rng(3117)
    for _ in range(60):
        case = random_program(rng)
        gp, cons = bind_random(case)
        base = {s.assignment for s in enumerate_solutions(gp, cons)}
        mask_full = [npp.active.copy() for npp in gp.npps]
        smaller = []
        for m in mask_full:
            keep = m.copy()
            for j in range(len(keep)):
                if rng.random() < 0.3:
                    keep[j] = False
            if not keep.any():
                keep[int(rng.integers(0, len(keep)))] = True
            smaller.append(keep)
        shrunk = apply_masks(gp, smaller)
        inner = {s.assignment for s in enumerate_solutions(shrunk, cons)}
        assert inner <= base
