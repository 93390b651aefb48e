"""Command-line front end.

Subcommands: parse, ground, solve, prob, train, eval, gen, bench.
Exit codes: 0 ok, 1 usage, 2 parse/ground error, 3 runtime budget exceeded.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from . import learning, pruning, solver, wmc
from .estimator import SlashClassifier
from .ground import GroundError, ground, ground_constraint, \
    ground_program_text, DEFAULT_ATOM_BUDGET
from .lang import ParseError, parse_program, parse_query, print_program
from .records import gen_sumN, load_records, load_models, save_models
from .solver import SolveBudgetError

log = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--verbose", action="store_true")


def _add_mode_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mode", choices=["exact", "topk", "same"],
                   default="exact")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--threshold", type=float, default=0.99)
    p.add_argument("--same-rule", choices=["cover", "leq"], default="cover")
    p.add_argument("--same-fallback", choices=["exact", "skip"],
                   default="exact")


def build_parser() -> argparse.ArgumentParser:
    root = _Parser(prog="slash", description=__doc__)
    sub = root.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", help="echo a program in canonical form")
    p.add_argument("--program", required=True)
    _add_common(p)

    p = sub.add_parser("ground", help="print the ground program")
    p.add_argument("--program", required=True)
    p.add_argument("--query")
    p.add_argument("--atom-budget", type=int, default=DEFAULT_ATOM_BUDGET)
    _add_common(p)

    p = sub.add_parser("solve", help="enumerate potential solutions")
    p.add_argument("--program", required=True)
    p.add_argument("--query")
    p.add_argument("--checkpoint")
    p.add_argument("--solution-budget", type=int,
                   default=solver.DEFAULT_SOLUTION_BUDGET)
    _add_mode_flags(p)
    _add_common(p)

    p = sub.add_parser("prob", help="query probabilities as JSONL")
    p.add_argument("--program", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--solution-budget", type=int,
                   default=solver.DEFAULT_SOLUTION_BUDGET)
    _add_mode_flags(p)
    _add_common(p)

    p = sub.add_parser("train", help="learn NPP parameters from queries")
    p.add_argument("--program", required=True)
    p.add_argument("--train", required=True, dest="train_path")
    p.add_argument("--test", dest="test_path")
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--metrics")
    p.add_argument("--checkpoint")
    p.add_argument("--shrinkage",
                   help="per-epoch solution-count CSV (same mode only)")
    p.add_argument("--entailment-scaling",
                   choices=["plain", "loglik_weighted"], default="plain")
    p.add_argument("--optimizer", choices=["sgd", "adam"], default="sgd")
    p.add_argument("--npp-kind", choices=["softmax", "tabular", "auto"],
                   default="softmax")
    p.add_argument("--timer", choices=["wall", "off"], default="wall")
    _add_mode_flags(p)
    _add_common(p)

    p = sub.add_parser("eval", help="per-instance accuracy of a checkpoint")
    p.add_argument("--program", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--test", required=True, dest="test_path")
    _add_common(p)

    p = sub.add_parser("gen", help="generate a synthetic digit-sum task")
    p.add_argument("--task", choices=["sum2", "sum3", "sum4"], required=True)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--noise", type=float, default=0.3)
    p.add_argument("--out", required=True)
    _add_common(p)

    p = sub.add_parser("bench", help="compare solving modes on one task")
    p.add_argument("--task", choices=["sum2", "sum3", "sum4"], required=True)
    p.add_argument("--samples", type=int, default=500)
    p.add_argument("--noise", type=float, default=0.3)
    p.add_argument("--modes", default="exact,topk,same")
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--out", required=True)
    p.add_argument("--npp-kind", choices=["softmax", "tabular", "auto"],
                   default="softmax")
    p.add_argument("--timer", choices=["wall", "off"], default="wall")
    _add_mode_flags(p)
    _add_common(p)

    return root


# --------------------------------------------------------------------------
# Command implementations
# --------------------------------------------------------------------------

def _read_program(path: str):
    return parse_program(Path(path).read_text(encoding="utf-8"))


def _bind(gp, checkpoint, data=None):
    if checkpoint:
        return wmc.with_npp_probabilities(gp, load_models(checkpoint), data)
    return wmc.with_uniform_probabilities(gp)


def _assignment_text(gp, sol) -> str:
    parts = []
    for npp, j in zip(gp.npps, sol.assignment):
        parts.append(f"{npp.name}({npp.instance_key})={npp.outcomes[j]}")
    return " ".join(parts)


def _solve_one(gp, cons, args):
    """Shared solve path for the solve and prob commands."""
    solve_gp = gp
    if args.mode == "same":
        masks = [pruning.same_prune(npp, npp.probs, args.threshold,
                                    args.same_rule) for npp in gp.npps]
        solve_gp = pruning.apply_masks(gp, masks)
    sols = solver.enumerate_solutions(solve_gp, cons,
                                      budget=args.solution_budget)
    sols = wmc.with_solution_probs(sols, gp)
    if args.mode == "topk":
        sols = solver.topk_solutions(sols, args.k)
    return sols


def cmd_parse(args) -> int:
    print(print_program(_read_program(args.program)), end="")
    return 0


def cmd_ground(args) -> int:
    program = _read_program(args.program)
    query = parse_query(args.query) if args.query else None
    gp = ground(program, query, atom_budget=args.atom_budget)
    print(ground_program_text(gp), end="")
    return 0


def cmd_solve(args) -> int:
    program = _read_program(args.program)
    gp = ground(program)
    cons = ground_constraint(gp, parse_query(args.query)) \
        if args.query else ()
    gp = _bind(gp, args.checkpoint)
    for sol in _solve_one(gp, cons, args):
        print(f"P={sol.prob:.12g} {_assignment_text(gp, sol)}")
    return 0


def cmd_prob(args) -> int:
    program = _read_program(args.program)
    gp = ground(program)
    models = load_models(args.checkpoint) if args.checkpoint else None
    for record in load_records(args.queries):
        cons = ground_constraint(gp, parse_query(record.constraint))
        bound = (wmc.with_npp_probabilities(gp, models, record.data)
                 if models else wmc.with_uniform_probabilities(gp))
        sols = _solve_one(bound, cons, args)
        qp = wmc.query_prob(sols)
        log_prob = math.log(max(qp.value, wmc.LOG_FLOOR))
        print(json.dumps({"id": record.id, "prob": qp.value,
                          "num_solutions": len(sols),
                          "log_prob": log_prob}))
    return 0


def cmd_train(args) -> int:
    program_text = Path(args.program).read_text(encoding="utf-8")
    train_records = load_records(args.train_path)
    test_records = load_records(args.test_path) if args.test_path else []
    cfg = learning.TrainConfig(
        epochs=args.epochs, batch_size=args.batch_size,
        learning_rate=args.lr, seed=args.seed, mode=args.mode, k=args.k,
        threshold=args.threshold, same_rule=args.same_rule,
        same_fallback=args.same_fallback,
        entailment_scaling=args.entailment_scaling,
        optimizer=args.optimizer, threads=args.threads,
        solution_budget=solver.DEFAULT_SOLUTION_BUDGET)
    models, trace, gp = bench_mod.run_training(
        program_text, train_records, test_records, cfg,
        npp_kind=args.npp_kind)
    if args.metrics:
        bench_mod.write_metrics_csv(trace.rows, args.metrics,
                                    timer=args.timer)
    if args.shrinkage:
        if trace.prune_state is None:
            raise ValueError("--shrinkage needs --mode same")
        bench_mod.write_shrinkage_csv(trace.prune_state, args.shrinkage)
    if args.checkpoint:
        save_models(models, args.checkpoint)
    if trace.final_test_acc is not None:
        print(f"test_acc={trace.final_test_acc:.6f}")
    print(f"skipped_queries={trace.skipped_queries} "
          f"exact_fallbacks={trace.exact_fallbacks}")
    return 0


def cmd_eval(args) -> int:
    program = _read_program(args.program)
    gp = ground(program)
    models = load_models(args.checkpoint)
    records = load_records(args.test_path)
    acc = bench_mod.eval_accuracy(models, gp, records)
    print(f"accuracy={acc:.6f}")
    return 0


def cmd_gen(args) -> int:
    n = int(args.task[3:])
    paths = gen_sumN(n, args.samples, args.noise, args.seed, args.out)
    for kind, path in paths.items():
        print(f"{kind}: {path}")
    return 0


def cmd_bench(args) -> int:
    n = int(args.task[3:])
    paths = gen_sumN(n, args.samples, args.noise, args.seed, args.out)
    program_text = Path(paths["program"]).read_text(encoding="utf-8")
    train_records = load_records(paths["train"])
    test_records = load_records(paths["test"])
    cfg = learning.TrainConfig(
        epochs=args.epochs, batch_size=args.batch_size,
        learning_rate=args.lr, seed=args.seed, mode="exact", k=args.k,
        threshold=args.threshold, same_rule=args.same_rule,
        same_fallback=args.same_fallback, threads=args.threads)
    modes = [m.strip() for m in args.modes.split(",") if m.strip()]
    result = bench_mod.bench(args.task, program_text, train_records,
                             test_records, modes, cfg, args.out,
                             timer=args.timer, npp_kind=args.npp_kind)
    for mode, entry in result.per_mode.items():
        acc = entry["accuracy"]
        acc_text = f"{acc:.4f}" if acc is not None else "-"
        print(f"{args.task} {mode}: accuracy={acc_text} "
              f"status={entry['status']}")
    return 0


_COMMANDS = {
    "parse": cmd_parse,
    "ground": cmd_ground,
    "solve": cmd_solve,
    "prob": cmd_prob,
    "train": cmd_train,
    "eval": cmd_eval,
    "gen": cmd_gen,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except (ParseError, GroundError) as exc:
        print(f"slash: {exc}", file=sys.stderr)
        return 2
    except SolveBudgetError as exc:
        print(f"slash: {exc}", file=sys.stderr)
        return 3
    except (OSError, ValueError, KeyError) as exc:
        print(f"slash: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
