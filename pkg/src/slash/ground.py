"""Grounding: instantiate rules over the finite constant domain, expand NPP
declarations into per-instance choice sets, and stratify the result.

The grounder works bottom-up in three phases:

1. evaluate the NPP-independent fragment of the program (facts plus rules
   whose predicates never reach an NPP atom) to its unique stratified model;
   these atoms are unconditionally true,
2. instantiate NPP declarations against that model -- a declaration whose
   ground body holds contributes one choice set per instance,
3. instantiate the remaining rules and all constraints over the possible
   atoms (true atoms, NPP outcome atoms, and heads derivable from possible
   bodies), simplifying away literals that are decided at grounding time.

Comparisons and arithmetic are evaluated during instantiation.  Division is
integral and truncates toward zero; division by zero makes the instance
false, which silently drops the ground rule.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional

import numpy as np

from . import lang
from .lang import (Arith, Atom, Comparison, Const, ConstraintRule, Fact,
                   IntTerm, Literal, NormalRule, NppDecl, Program, Var)
from .npp import NppQueryKind

__all__ = [
    "GroundError",
    "GroundAtomTable",
    "GroundNpp",
    "GroundRule",
    "GroundConstraint",
    "GroundProgram",
    "ground",
    "ground_constraint",
    "stratify",
    "ground_program_text",
]

DEFAULT_ATOM_BUDGET = 10 ** 6

_PATTERN_TO_KIND = {
    ("+", "-"): NppQueryKind.COND_CLASS_GIVEN_DATA,
    ("-", "+"): NppQueryKind.COND_DATA_GIVEN_CLASS,
    ("+", "+"): NppQueryKind.JOINT,
    ("-", "-"): NppQueryKind.PRIOR,
}


class GroundError(Exception):
    """Raised for unsafe rules, non-stratified negation, or budget breaches."""

    def __init__(self, message: str, rule_text: str = ""):
        self.rule_text = rule_text
        if rule_text:
            message = f"{message} [in: {rule_text.strip()}]"
        super().__init__(message)


# --------------------------------------------------------------------------
# Ground atoms
# --------------------------------------------------------------------------

class GroundAtomTable:
    """Interns ground atoms (pred, args) to dense integer ids."""

    def __init__(self):
        self._ids: dict = {}
        self.keys: list = []

    def __len__(self) -> int:
        return len(self.keys)

    def intern(self, key: tuple) -> int:
        atom_id = self._ids.get(key)
        if atom_id is None:
            atom_id = len(self.keys)
            self._ids[key] = atom_id
            self.keys.append(key)
        return atom_id

    def id_of(self, key: tuple) -> Optional[int]:
        return self._ids.get(key)

    def text(self, atom_id: int) -> str:
        pred, args = self.keys[atom_id]
        if not args:
            return pred
        return f"{pred}({','.join(str(a) for a in args)})"


@dataclass
class GroundNpp:
    """One ground NPP instance and its exactly-one choice set."""
    name: str
    instance: tuple                 # ground instance terms
    outcomes: tuple                 # declared outcome values
    atom_ids: tuple                 # one ground atom id per outcome
    active: np.ndarray              # bool mask, pruning state
    probs: Optional[np.ndarray] = None
    kind: Optional[NppQueryKind] = None

    @property
    def instance_key(self) -> str:
        return ",".join(str(t) for t in self.instance)

    def check(self) -> None:
        assert len(self.outcomes) == len(self.atom_ids) == len(self.active)
        assert len(set(self.atom_ids)) == len(self.atom_ids)
        assert self.active.any(), "GroundNpp with no active outcome"
        if self.probs is not None:
            assert len(self.probs) == len(self.outcomes)
            assert abs(float(self.probs.sum()) - 1.0) <= 1e-9, \
                "NPP probabilities must sum to 1 over all outcomes"

    def replace(self, **changes) -> "GroundNpp":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class GroundRule:
    head: int
    pos: tuple                      # atom ids
    neg: tuple                      # atom ids


@dataclass(frozen=True)
class GroundConstraint:
    pos: tuple
    neg: tuple


@dataclass
class GroundProgram:
    atoms: GroundAtomTable
    facts: tuple                    # unconditionally true atom ids (incl. derived)
    rules: tuple                    # GroundRule
    constraints: tuple              # GroundConstraint
    npps: tuple                     # GroundNpp
    strata: dict                    # predicate -> stratum index
    by_pred: dict = field(default_factory=dict)   # pred -> [(id, args)], possible atoms

    def with_npps(self, npps: Iterable[GroundNpp]) -> "GroundProgram":
        return dataclasses.replace(self, npps=tuple(npps))


# --------------------------------------------------------------------------
# Term evaluation and matching
# --------------------------------------------------------------------------

def _eval_term(term, binding: dict):
    """Ground value of a term under a binding; None when division by zero."""
    if isinstance(term, Const):
        return term.name
    if isinstance(term, IntTerm):
        return term.value
    if isinstance(term, Var):
        return binding[term.name]
    if isinstance(term, Arith):
        left = _eval_term(term.left, binding)
        right = _eval_term(term.right, binding)
        if left is None or right is None:
            return None
        if not isinstance(left, int) or not isinstance(right, int):
            return None
        if term.op == "+":
            return left + right
        if term.op == "-":
            return left - right
        if term.op == "*":
            return left * right
        if right == 0:
            return None
        quotient = abs(left) // abs(right)
        return quotient if (left >= 0) == (right >= 0) else -quotient
    raise TypeError(f"not a term: {term!r}")


def _compare(op: str, left, right) -> bool:
    if op == "=":
        return left == right
    if op == "!=":
        return left != right
    # ordering comparisons follow (type, value) so ints and symbols never mix
    if type(left) is not type(right):
        left, right = str(left), str(right)
    if op == "<":
        return left < right
    if op == "<=":
        return left <= right
    if op == ">":
        return left > right
    if op == ">=":
        return left >= right
    raise ValueError(f"unknown comparison {op}")


def _free_vars(term) -> set:
    return set(lang._term_vars(term))


# --------------------------------------------------------------------------
# Safety analysis: order body elements so every step is instantiable
# --------------------------------------------------------------------------

def _plan_body(body: tuple, extra_targets: Iterable = (), rule_text: str = "") -> list:
    """Order body elements left-to-right so each is evaluable when reached.

    Positive literals bind their plain variables; ``V = expr`` binds V once
    expr is bound.  Negated literals and general comparisons only check.
    Raises GroundError when some variable can never be bound (unsafe rule).
    """
    pending = list(body)
    bound: set = set()
    plan = []

    def ready(elem) -> bool:
        if isinstance(elem, Literal):
            if elem.negated:
                return all(_free_vars(a) <= bound for a in elem.atom.args)
            # only arithmetic args must be pre-bound; plain vars bind here
            return all(isinstance(a, (Const, IntTerm, Var)) or
                       _free_vars(a) <= bound for a in elem.atom.args)
        if isinstance(elem, Comparison):
            if elem.op == "=":
                if isinstance(elem.left, Var) and elem.left.name not in bound:
                    return _free_vars(elem.right) <= bound
                if isinstance(elem.right, Var) and elem.right.name not in bound:
                    return _free_vars(elem.left) <= bound
            return _free_vars(elem.left) <= bound and \
                _free_vars(elem.right) <= bound
        raise TypeError(f"not a body element: {elem!r}")

    while pending:
        chosen = next((e for e in pending if ready(e)), None)
        if chosen is None:
            unbound = sorted(
                v for e in pending
                for t in (e.atom.args if isinstance(e, Literal)
                          else (e.left, e.right))
                for v in _free_vars(t) if v not in bound)
            raise GroundError(
                f"unsafe rule: variable(s) {', '.join(unbound)} "
                "not bound by a positive literal", rule_text)
        pending.remove(chosen)
        plan.append(chosen)
        if isinstance(chosen, Literal) and not chosen.negated:
            for arg in chosen.atom.args:
                if isinstance(arg, Var):
                    bound.add(arg.name)
        elif isinstance(chosen, Comparison) and chosen.op == "=":
            for side in (chosen.left, chosen.right):
                if isinstance(side, Var):
                    bound.add(side.name)

    for target in extra_targets:
        terms = target.args if isinstance(target, Atom) else (target,)
        missing = set().union(*(_free_vars(t) for t in terms)) - bound \
            if terms else set()
        if missing:
            raise GroundError(
                f"unsafe rule: variable(s) {', '.join(sorted(missing))} "
                "not bound by a positive literal", rule_text)
    return plan


# --------------------------------------------------------------------------
# Instantiation over possible atoms
# --------------------------------------------------------------------------

def _match_atom(atom: Atom, candidates: list, binding: dict) -> Iterator[tuple]:
    """Yield (atom_id, new_binding) for possible atoms matching ``atom``."""
    pattern = []
    for arg in atom.args:
        if isinstance(arg, Var):
            value = binding.get(arg.name, _UNBOUND)
            pattern.append((arg.name, value))
        else:
            value = _eval_term(arg, binding)
            if value is None:
                return
            pattern.append((None, value))
    for atom_id, args in candidates:
        new = None
        for (name, want), got in zip(pattern, args):
            if want is _UNBOUND:
                if new is None:
                    new = dict(binding)
                if name in new and new[name] != got:
                    break
                new[name] = got
            elif want != got:
                break
        else:
            yield atom_id, (new if new is not None else binding)


class _Unbound:
    __repr__ = lambda self: "<unbound>"


_UNBOUND = _Unbound()


def _instantiate(plan: list, by_pred: dict, binding: dict) -> Iterator[dict]:
    """Yield complete bindings; negated literals are collected by the caller."""
    if not plan:
        yield binding
        return
    elem, rest = plan[0], plan[1:]
    if isinstance(elem, Literal) and not elem.negated:
        candidates = by_pred.get(elem.atom.pred, ())
        for _, new_binding in _match_atom(elem.atom, candidates, binding):
            yield from _instantiate(rest, by_pred, new_binding)
        return
    if isinstance(elem, Literal):
        # negated: all vars bound; recorded later, always "possible" here
        yield from _instantiate(rest, by_pred, binding)
        return
    # comparison
    if elem.op == "=" and isinstance(elem.left, Var) and \
            elem.left.name not in binding:
        value = _eval_term(elem.right, binding)
        if value is None:
            return
        new = dict(binding)
        new[elem.left.name] = value
        yield from _instantiate(rest, by_pred, new)
        return
    if elem.op == "=" and isinstance(elem.right, Var) and \
            elem.right.name not in binding:
        value = _eval_term(elem.left, binding)
        if value is None:
            return
        new = dict(binding)
        new[elem.right.name] = value
        yield from _instantiate(rest, by_pred, new)
        return
    left = _eval_term(elem.left, binding)
    right = _eval_term(elem.right, binding)
    if left is None or right is None:
        return
    if _compare(elem.op, left, right):
        yield from _instantiate(rest, by_pred, binding)


def _ground_atom_key(atom: Atom, binding: dict) -> Optional[tuple]:
    args = []
    for arg in atom.args:
        value = _eval_term(arg, binding)
        if value is None:
            return None
        args.append(value)
    return (atom.pred, tuple(args))


# --------------------------------------------------------------------------
# Predicate-level stratification
# --------------------------------------------------------------------------

def _stratify_edges(edges: list, preds: Iterable, context: str) -> dict:
    """Relaxation over (head, body, negated) edges; diverging means a cycle
    through negation."""
    strata = {p: 0 for p in preds}
    for _ in range(len(strata) + 1):
        changed = False
        for head, body, negated in edges:
            need = strata[body] + (1 if negated else 0)
            if strata[head] < need:
                strata[head] = need
                changed = True
        if not changed:
            return strata
    raise GroundError(f"non-stratified negation in {context}")


def stratify(gp: GroundProgram) -> dict:
    """Predicate strata of a ground program: positive dependencies stay <=,
    negative dependencies are strictly below.  NPP predicates sit at 0."""
    preds = {key[0] for key in gp.atoms.keys}
    edges = []
    for rule in gp.rules:
        head_pred = gp.atoms.keys[rule.head][0]
        for atom_id in rule.pos:
            edges.append((head_pred, gp.atoms.keys[atom_id][0], False))
        for atom_id in rule.neg:
            edges.append((head_pred, gp.atoms.keys[atom_id][0], True))
    return _stratify_edges(edges, sorted(preds), "ground program")


def _ast_strata(program: Program, preds: Iterable) -> dict:
    edges = []
    for stmt in program.statements:
        if isinstance(stmt, NormalRule):
            for elem in stmt.body:
                if isinstance(elem, Literal):
                    edges.append(
                        (stmt.head.pred, elem.atom.pred, elem.negated))
    return _stratify_edges(edges, preds, "program")


# --------------------------------------------------------------------------
# The grounder
# --------------------------------------------------------------------------

def _npp_dependent_preds(program: Program, npp_names: set) -> set:
    """Predicates whose truth can depend on an NPP outcome atom."""
    direct: dict = {}
    for stmt in program.statements:
        if isinstance(stmt, NormalRule):
            deps = direct.setdefault(stmt.head.pred, set())
            for elem in stmt.body:
                if isinstance(elem, Literal):
                    deps.add(elem.atom.pred)
    dependent = set(npp_names)
    changed = True
    while changed:
        changed = False
        for head, deps in direct.items():
            if head not in dependent and deps & dependent:
                dependent.add(head)
                changed = True
    return dependent


def _derive_kinds(program: Program, query: Optional[ConstraintRule],
                  npp_names: set) -> dict:
    kinds: dict = {}
    statements = list(program.statements)
    if query is not None:
        statements.append(query)
    for stmt in statements:
        for atom, _ in lang._atoms_of(stmt):
            if atom.pred in npp_names and atom.annotated:
                pattern = (atom.ann[0], atom.ann[-1])
                kind = _PATTERN_TO_KIND[pattern]
                if kinds.setdefault(atom.pred, kind) != kind:
                    raise GroundError(
                        f"query marker pattern for {atom.pred} conflicts "
                        "with the program's")
    return kinds


def ground(program: Program, query: Optional[ConstraintRule] = None,
           atom_budget: int = DEFAULT_ATOM_BUDGET) -> GroundProgram:
    """Ground a validated program, optionally together with a query."""
    sigs = lang.npp_signatures(program)
    npp_names = set(sigs)
    dependent = _npp_dependent_preds(program, npp_names)

    all_preds = set(npp_names)
    for stmt in program.statements:
        for atom, _ in lang._atoms_of(stmt):
            all_preds.add(atom.pred)
    ast_strata = _ast_strata(program, sorted(all_preds))

    table = GroundAtomTable()
    by_pred: dict = {}
    true_ids: dict = {}             # ordered set of unconditionally true atoms
    current_rule_text = [""]

    # interning helper that also maintains the per-predicate index exactly once
    seen_possible: set = set()

    def make_possible(key: tuple) -> int:
        atom_id = table.intern(key)
        if len(table) > atom_budget:
            raise GroundError(
                f"atom budget exceeded ({atom_budget} ground atoms)",
                current_rule_text[0])
        if atom_id not in seen_possible:
            seen_possible.add(atom_id)
            by_pred.setdefault(key[0], []).append((atom_id, key[1]))
        return atom_id

    # ---- facts ------------------------------------------------------------
    for stmt, span in zip(program.statements, program.spans):
        if isinstance(stmt, Fact):
            current_rule_text[0] = lang.print_statement(stmt)
            key = _ground_atom_key(stmt.atom, {})
            if key is None:
                continue            # arithmetic bottom in a fact: drop it
            true_ids[make_possible(key)] = True

    # ---- phase A: NPP-independent fragment ---------------------------------
    independent_rules = [
        stmt for stmt in program.statements
        if isinstance(stmt, NormalRule) and stmt.head.pred not in dependent]
    max_stratum = max((ast_strata[r.head.pred] for r in independent_rules),
                      default=0)
    for stratum in range(max_stratum + 1):
        layer = [r for r in independent_rules
                 if ast_strata[r.head.pred] == stratum]
        changed = True
        while changed:
            changed = False
            for rule in layer:
                current_rule_text[0] = lang.print_statement(rule)
                plan = _plan_body(rule.body, (rule.head,) + tuple(
                    e.atom for e in rule.body
                    if isinstance(e, Literal) and e.negated),
                    current_rule_text[0])
                for binding in _instantiate(plan, by_pred, {}):
                    ok = True
                    for elem in rule.body:
                        if isinstance(elem, Literal) and elem.negated:
                            key = _ground_atom_key(elem.atom, binding)
                            if key is not None and \
                                    table.id_of(key) in true_ids:
                                ok = False
                                break
                    if not ok:
                        continue
                    key = _ground_atom_key(rule.head, binding)
                    if key is None:
                        continue
                    atom_id = make_possible(key)
                    if atom_id not in true_ids:
                        true_ids[atom_id] = True
                        changed = True

    # restrict phase-A joins: only true atoms exist so far, so by_pred holds
    # exactly the true atoms plus facts; negated lookups above are complete
    # because lower strata are finished before a stratum starts.

    # ---- phase B: NPP instances --------------------------------------------
    npps: list = []
    seen_instances: set = set()
    for stmt in program.statements:
        if not isinstance(stmt, NppDecl):
            continue
        current_rule_text[0] = lang.print_statement(stmt)
        for elem in stmt.body:
            if isinstance(elem, Literal) and elem.atom.pred in dependent:
                raise GroundError(
                    "NPP declaration body must not depend on NPP outcomes",
                    current_rule_text[0])
        plan = _plan_body(stmt.body, stmt.instance_args, current_rule_text[0])
        for binding in _instantiate(plan, by_pred, {}):
            ok = True
            for elem in stmt.body:
                if isinstance(elem, Literal) and elem.negated:
                    key = _ground_atom_key(elem.atom, binding)
                    if key is not None and table.id_of(key) in true_ids:
                        ok = False
                        break
            if not ok:
                continue
            instance = tuple(_eval_term(t, binding)
                             for t in stmt.instance_args)
            if any(v is None for v in instance):
                continue
            if (stmt.name, instance) in seen_instances:
                continue
            seen_instances.add((stmt.name, instance))
            values = tuple(_eval_term(o, {}) for o in stmt.outcomes)
            atom_ids = tuple(
                make_possible((stmt.name, instance + (value,)))
                for value in values)
            npps.append(GroundNpp(
                name=stmt.name, instance=instance, outcomes=values,
                atom_ids=atom_ids, active=np.ones(len(values), dtype=bool)))

    kinds = _derive_kinds(program, query, npp_names)
    for npp in npps:
        npp.kind = kinds.get(npp.name)
        npp.check()

    # ---- phase C: rules that can depend on NPP outcomes --------------------
    dependent_rules = [
        (stmt, lang.print_statement(stmt)) for stmt in program.statements
        if isinstance(stmt, NormalRule) and stmt.head.pred in dependent]

    raw_rules: dict = {}            # (head, pos, neg_keys) -> None, ordered
    changed = True
    while changed:
        changed = False
        for rule, text in dependent_rules:
            current_rule_text[0] = text
            plan = _plan_body(rule.body, (rule.head,) + tuple(
                e.atom for e in rule.body
                if isinstance(e, Literal) and e.negated), text)
            for binding in _instantiate(plan, by_pred, {}):
                head_key = _ground_atom_key(rule.head, binding)
                if head_key is None:
                    continue
                entry = _finish_instance(rule.body, binding, table, true_ids)
                if entry is None:
                    continue
                pos_ids, neg_keys = entry
                head_id = make_possible(head_key)
                item = (head_id, pos_ids, neg_keys)
                if item not in raw_rules:
                    raw_rules[item] = True
                    changed = True

    # ---- constraints (program order, then the query) ------------------------
    raw_constraints: list = []

    def ground_constraint_ast(stmt: ConstraintRule, text: str) -> None:
        current_rule_text[0] = text
        plan = _plan_body(stmt.body, tuple(
            e.atom for e in stmt.body
            if isinstance(e, Literal) and e.negated), text)
        for binding in _instantiate(plan, by_pred, {}):
            entry = _finish_instance(stmt.body, binding, table, true_ids)
            if entry is not None:
                raw_constraints.append(entry)

    for stmt in program.statements:
        if isinstance(stmt, ConstraintRule):
            ground_constraint_ast(stmt, lang.print_statement(stmt))
    if query is not None:
        ground_constraint_ast(query, lang.print_statement(query))

    # ---- finalize: resolve negative keys against the possible-atom set ------
    def resolve(pos_ids: tuple, neg_keys: tuple):
        for key in neg_keys:
            atom_id = table.id_of(key)
            if atom_id is not None and atom_id in true_ids:
                return None          # negated atom is a fact: instance dead
        # atoms never interned are impossible, so their negation is vacuous
        neg_ids = tuple(table.id_of(key) for key in neg_keys
                        if table.id_of(key) is not None)
        pos = tuple(i for i in pos_ids if i not in true_ids)
        return pos, neg_ids

    rules = []
    for head_id, pos_ids, neg_keys in raw_rules:
        resolved = resolve(pos_ids, neg_keys)
        if resolved is None:
            continue
        pos, neg = resolved
        rules.append(GroundRule(head_id, pos, neg))

    constraints = []
    for pos_ids, neg_keys in raw_constraints:
        resolved = resolve(pos_ids, neg_keys)
        if resolved is None:
            continue
        pos, neg = resolved
        constraints.append(GroundConstraint(pos, neg))

    gp = GroundProgram(
        atoms=table, facts=tuple(true_ids), rules=tuple(rules),
        constraints=tuple(constraints), npps=tuple(npps), strata={},
        by_pred=by_pred)
    gp.strata = stratify(gp)
    return gp


def _finish_instance(body: tuple, binding: dict, table: GroundAtomTable,
                     true_ids: dict):
    """Positive ids and negative keys of one ground instance, or None when
    the instance is decided false at grounding time."""
    pos_ids: list = []
    neg_keys: list = []
    for elem in body:
        if not isinstance(elem, Literal):
            continue
        key = _ground_atom_key(elem.atom, binding)
        if key is None:
            return None
        if elem.negated:
            neg_keys.append(key)
        else:
            atom_id = table.id_of(key)
            if atom_id is None:
                return None
            pos_ids.append(atom_id)
    return tuple(dict.fromkeys(pos_ids)), tuple(dict.fromkeys(neg_keys))


def ground_constraint(gp: GroundProgram, query: ConstraintRule) -> tuple:
    """Ground a query constraint against an already-grounded program.

    Returns a tuple of GroundConstraint covering every instantiation of the
    query's variables; atoms never mentioned by the program stay impossible,
    so a positive query literal on them yields no instance."""
    text = lang.print_statement(query)
    plan = _plan_body(query.body, tuple(
        e.atom for e in query.body
        if isinstance(e, Literal) and e.negated), text)
    true_ids = dict.fromkeys(gp.facts)
    out = []
    for binding in _instantiate(plan, gp.by_pred, {}):
        entry = _finish_instance(query.body, binding, gp.atoms, true_ids)
        if entry is None:
            continue
        pos_ids, neg_keys = entry
        dead = False
        for key in neg_keys:
            atom_id = gp.atoms.id_of(key)
            if atom_id is not None and atom_id in true_ids:
                dead = True
                break
        if dead:
            continue
        neg_ids = tuple(gp.atoms.id_of(key) for key in neg_keys
                        if gp.atoms.id_of(key) is not None)
        pos = tuple(i for i in pos_ids if i not in true_ids)
        out.append(GroundConstraint(pos, neg_ids))
    return tuple(out)


# --------------------------------------------------------------------------
# Canonical ground text
# --------------------------------------------------------------------------

def ground_program_text(gp: GroundProgram) -> str:
    lines = []
    for atom_id in gp.facts:
        lines.append(f"{gp.atoms.text(atom_id)}.")
    for npp in gp.npps:
        members = ";".join(gp.atoms.text(a) for a in npp.atom_ids)
        lines.append("1{" + members + "}1.")
    for rule in gp.rules:
        body = [gp.atoms.text(a) for a in rule.pos]
        body += [f"not {gp.atoms.text(a)}" for a in rule.neg]
        head = gp.atoms.text(rule.head)
        if body:
            lines.append(f"{head} :- {', '.join(body)}.")
        else:
            lines.append(f"{head}.")
    for con in gp.constraints:
        body = [gp.atoms.text(a) for a in con.pos]
        body += [f"not {gp.atoms.text(a)}" for a in con.neg]
        lines.append(f":- {', '.join(body)}.")
    return "\n".join(lines) + ("\n" if lines else "")
