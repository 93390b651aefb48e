"""Probabilistic answer set programming with neural-probabilistic predicates.

Pipeline: parse a program (`slash.lang`), ground it (`slash.ground`), bind
outcome probabilities from NPP models (`slash.wmc`), enumerate stable models
(`slash.solver`), weight and aggregate them (`slash.wmc`), and learn NPP
parameters from entailed queries (`slash.learning`), optionally pruning
outcome choice sets by probability mass (`slash.pruning`).
"""

from .lang import (Program, ParseError, ValidationError, parse_program,
                   parse_query, print_program)
from .ground import (GroundError, GroundNpp, GroundProgram, ground,
                     ground_constraint, stratify, ground_program_text)
from .npp import (FixedTableNpp, NppQueryKind, SoftmaxLinearNpp,
                  TabularJointNpp, UnsupportedQueryKind, npp_forward,
                  npp_backward, npp_loss_grad)
from .solver import (PotentialSolution, SolveBudgetError, enumerate_solutions,
                     fixpoint_eval, topk_solutions)
from .wmc import (QueryProbability, query_prob, query_set_log_prob,
                  query_set_prob, solution_prob, with_npp_probabilities,
                  with_solution_probs, with_uniform_probabilities)
from .learning import (GradientReport, SkippedQuery, TrainConfig,
                       coordinate_descent, entailment_update, grad_logPQ)
from .pruning import (PruneState, apply_masks, same_prune, shrinkage_report)
from .records import (QueryRecord, gen_sumN, load_models, load_records,
                      save_models, save_records)
from .bench import build_models, eval_accuracy, run_training
from .estimator import SlashClassifier

__version__ = "0.1.0"
