"""Scikit-learn style front end for entailment training.

`SlashClassifier` wraps the whole pipeline: it holds the logic program and
the training hyperparameters as constructor params (so `get_params` /
`set_params` and grid search work as usual), learns NPP parameters from
query records in `fit`, and classifies per-instance feature vectors with
`predict` / `predict_proba` like any other estimator.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from . import bench, learning
from .ground import ground
from .lang import parse_program
from .npp import NppQueryKind, npp_forward
from .records import QueryRecord, load_records

__all__ = ["SlashClassifier", "check_feature_matrix", "check_records"]


def check_feature_matrix(X, n_features: Optional[int] = None) -> np.ndarray:
    """2-D float array with a consistent, non-zero feature width."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2 or X.shape[1] == 0:
        raise ValueError(f"expected a 2-D feature matrix, got shape {X.shape}")
    if not np.isfinite(X).all():
        raise ValueError("feature matrix contains NaN or infinity")
    if n_features is not None and X.shape[1] != n_features:
        raise ValueError(
            f"expected {n_features} features, got {X.shape[1]}")
    return X


def check_records(records) -> list:
    """Accept a list of QueryRecord or a JSONL path; reject anything else."""
    if isinstance(records, (str, bytes)) or hasattr(records, "__fspath__"):
        return load_records(records)
    records = list(records)
    for r in records:
        if not isinstance(r, QueryRecord):
            raise TypeError(f"expected QueryRecord, got {type(r).__name__}")
    return records


class SlashClassifier(ClassifierMixin, BaseEstimator):
    """Per-instance classifier trained from aggregate logical supervision.

    Parameters mirror the training configuration; `program` is the logic
    program text and `npp` names the declared NPP whose model answers
    `predict`.  Training examples are query records whose constraints are
    entailed; labels are never used for fitting, only for scoring.
    """

    def __init__(self, program: str = "", npp: str = "digit",
                 epochs: int = 5, learning_rate: float = 0.1,
                 batch_size: int = 16, mode: str = "exact", k: int = 10,
                 threshold: float = 0.99, same_rule: str = "cover",
                 same_fallback: str = "exact",
                 entailment_scaling: str = "plain", optimizer: str = "sgd",
                 npp_kind: str = "softmax", seed: int = 0, threads: int = 1):
        self.program = program
        self.npp = npp
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.mode = mode
        self.k = k
        self.threshold = threshold
        self.same_rule = same_rule
        self.same_fallback = same_fallback
        self.entailment_scaling = entailment_scaling
        self.optimizer = optimizer
        self.npp_kind = npp_kind
        self.seed = seed
        self.threads = threads

    def _config(self) -> learning.TrainConfig:
        return learning.TrainConfig(
            epochs=self.epochs, batch_size=self.batch_size,
            learning_rate=self.learning_rate, seed=self.seed, mode=self.mode,
            k=self.k, threshold=self.threshold, same_rule=self.same_rule,
            same_fallback=self.same_fallback,
            entailment_scaling=self.entailment_scaling,
            optimizer=self.optimizer, threads=self.threads)

    def fit(self, records, y=None, test_records=None):
        """Learn NPP parameters from entailed query records."""
        if not self.program:
            raise ValueError("an NPP-declaring program is required")
        records = check_records(records)
        if not records:
            raise ValueError("no training records given")
        cfg = self._config()
        test = check_records(test_records) if test_records else []
        models, trace, gp = bench.run_training(
            self.program, records, test, cfg, npp_kind=self.npp_kind)
        if self.npp not in models:
            raise ValueError(f"program declares no NPP named {self.npp!r}")
        self.models_ = models
        self.trace_ = trace
        self.ground_program_ = gp
        outcomes = next(n.outcomes for n in gp.npps if n.name == self.npp)
        self.classes_ = np.asarray(outcomes)
        return self

    def _check_fitted(self):
        if not hasattr(self, "models_"):
            raise NotFittedError("fit the classifier before predicting")

    def predict_proba(self, X) -> np.ndarray:
        """Outcome distribution per row of instance data."""
        self._check_fitted()
        model = self.models_[self.npp]
        if not hasattr(model, "n_features"):
            bins = np.asarray(X).reshape(-1)
            return np.stack([
                npp_forward(model, NppQueryKind.COND_CLASS_GIVEN_DATA,
                            int(b)) for b in bins])
        X = check_feature_matrix(X, model.n_features)
        return np.stack([
            npp_forward(model, NppQueryKind.COND_CLASS_GIVEN_DATA, row)
            for row in X])

    def predict(self, X) -> np.ndarray:
        """Most probable outcome per row; ties break to the lowest index."""
        proba = self.predict_proba(X)
        return self.classes_[np.argmax(proba, axis=1)]

    def score(self, X, y, sample_weight=None) -> float:
        y = np.asarray(y)
        return float(np.mean(self.predict(X) == y))
