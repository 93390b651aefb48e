"""Outcome pruning by probability mass (the ``same`` solving mode).

Per ground NPP and data instance, outcomes are sorted by descending
probability and the smallest prefix whose cumulative mass reaches the
threshold stays active; everything else is masked off the choice set.
Masks shrink the assignment space the solver walks, so enumeration gets
cheaper as the predicted distributions sharpen during training.  Masked
probabilities are never renormalized: pruning discards mass.

The alternate ``leq`` rule keeps the largest prefix whose mass stays at or
below the threshold instead; it exists for comparison runs only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .ground import GroundNpp, GroundProgram

__all__ = [
    "same_prune",
    "apply_masks",
    "PruneState",
    "ShrinkageReport",
    "shrinkage_report",
]

_EPS = 1e-12


def same_prune(npp: GroundNpp, probs: Sequence, t: float,
               rule: str = "cover") -> np.ndarray:
    """Active-outcome mask keeping the probability-sorted prefix.

    cover: minimal prefix with cumulative mass >= t, ties at the cut kept.
    leq:   maximal prefix with cumulative mass <= t (never empty).
    """
    probs = np.asarray(probs, dtype=np.float64)
    n = probs.size
    if n != len(npp.outcomes):
        raise ValueError("probability vector does not match the outcome list")
    if not 0.0 < t <= 1.0:
        raise ValueError("threshold must lie in (0, 1]")
    if rule not in ("cover", "leq"):
        raise ValueError(f"unknown pruning rule {rule!r}")

    order = np.argsort(-probs, kind="stable")
    cum = np.cumsum(probs[order])

    if rule == "cover":
        if t >= 1.0:
            return np.ones(n, dtype=bool)
        covered = np.nonzero(cum >= t - _EPS)[0]
        cut = int(covered[0]) if covered.size else n - 1
        while cut + 1 < n and probs[order[cut + 1]] == probs[order[cut]]:
            cut += 1
    else:
        below = np.nonzero(cum <= t + _EPS)[0]
        cut = int(below[-1]) if below.size else 0

    mask = np.zeros(n, dtype=bool)
    mask[order[:cut + 1]] = True
    if rule == "cover" and not mask.all():
        assert float(probs[mask].sum()) >= t - 1e-9, \
            "pruned mask no longer covers the threshold mass"
    return mask


def apply_masks(gp: GroundProgram, masks: Iterable) -> GroundProgram:
    """Copy of ``gp`` with truncated choice sets; the input is untouched."""
    masks = list(masks)
    if len(masks) != len(gp.npps):
        raise ValueError("one mask per ground NPP required")
    npps = []
    for npp, mask in zip(gp.npps, masks):
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (len(npp.outcomes),):
            raise ValueError(
                f"mask shape mismatch for {npp.name}({npp.instance_key})")
        if not mask.any():
            raise ValueError(
                f"mask would deactivate every outcome of "
                f"{npp.name}({npp.instance_key})")
        npps.append(npp.replace(active=mask & npp.active))
    return gp.with_npps(npps)


# --------------------------------------------------------------------------
# Shrinkage tracking across training
# --------------------------------------------------------------------------

@dataclass
class PruneState:
    """Per-epoch pruning history: solution counts, active-outcome counts,
    and the minimum covered mass seen whenever a mask dropped outcomes."""
    threshold: float
    epoch_solution_counts: list = field(default_factory=list)
    epoch_active_counts: list = field(default_factory=list)
    epoch_covered_mass: list = field(default_factory=list)
    _current_solutions: list = field(default_factory=list)
    _current_active: list = field(default_factory=list)
    _current_mass: list = field(default_factory=list)

    def record_masks(self, masks: Iterable, probs: Iterable) -> None:
        for mask, p in zip(masks, probs):
            mask = np.asarray(mask, dtype=bool)
            self._current_active.append(int(mask.sum()))
            if not mask.all():
                self._current_mass.append(float(np.asarray(p)[mask].sum()))

    def record_query(self, n_solutions: int) -> None:
        self._current_solutions.append(int(n_solutions))

    def end_epoch(self) -> None:
        self.epoch_solution_counts.append(self._current_solutions)
        self.epoch_active_counts.append(self._current_active)
        self.epoch_covered_mass.append(
            min(self._current_mass) if self._current_mass else 1.0)
        self._current_solutions = []
        self._current_active = []
        self._current_mass = []

    @property
    def epochs(self) -> int:
        return len(self.epoch_solution_counts)


@dataclass
class ShrinkageReport:
    mean_counts: list               # epoch-mean potential-solution counts
    non_increasing: list            # per transition, within slack
    verdict: bool                   # every transition non-increasing


def shrinkage_report(state: PruneState, slack: float = 0.05) -> ShrinkageReport:
    """Epoch-mean solution counts and whether they never grow beyond slack."""
    if state.epochs < 2:
        raise ValueError("shrinkage needs at least two recorded epochs")
    means = [float(np.mean(counts)) if counts else 0.0
             for counts in state.epoch_solution_counts]
    flags = [means[i + 1] <= means[i] * (1.0 + slack)
             for i in range(len(means) - 1)]
    return ShrinkageReport(means, flags, all(flags))
