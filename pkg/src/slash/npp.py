"""Learnable probability providers behind NPP names.

A model answers up to four query kinds selected by the +/- markers on the
annotated atom: given data and asking for the class distribution, the
reverse, the full joint, or the class prior.  The ``data`` argument always
carries the realization of whatever variable is marked given: a feature
vector or bin index when the data side is given, a class index when only
the class side is given, nothing for the prior.  A joint query returns the
full joint table flattened row-major, so every forward result is a point on
a probability simplex.
"""

from __future__ import annotations

import enum
import logging
from typing import Optional

import numpy as np

__all__ = [
    "NppQueryKind",
    "UnsupportedQueryKind",
    "NppModel",
    "FixedTableNpp",
    "SoftmaxLinearNpp",
    "TabularJointNpp",
    "npp_forward",
    "npp_backward",
    "npp_loss_grad",
]

PROB_FLOOR = 1e-12
_SIMPLEX_TOL = 1e-9


class NppQueryKind(enum.Enum):
    COND_CLASS_GIVEN_DATA = "class_given_data"   # (+X, -C)
    COND_DATA_GIVEN_CLASS = "data_given_class"   # (-X, +C)
    JOINT = "joint"                              # (+X, +C)
    PRIOR = "prior"                              # (-X, -C)


class UnsupportedQueryKind(Exception):
    pass


def _check_simplex(vec: np.ndarray) -> np.ndarray:
    assert vec.ndim == 1 and np.all(vec >= 0.0) and \
        abs(float(vec.sum()) - 1.0) <= _SIMPLEX_TOL, \
        "forward output must lie on the probability simplex"
    return vec


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max()
    exp = np.exp(shifted)
    return exp / exp.sum()


class NppModel:
    """Interface shared by all probability providers."""

    n_outcomes: int
    trainable: bool = True

    def supports(self, kind: NppQueryKind) -> bool:
        raise NotImplementedError

    def forward(self, kind: NppQueryKind, data=None) -> np.ndarray:
        raise NotImplementedError

    def backward(self, kind: NppQueryKind, data, upstream: np.ndarray):
        """Parameter gradient of ``upstream . forward(kind, data)``."""
        raise NotImplementedError

    def parameters(self) -> dict:
        return {}

    def set_parameters(self, params: dict) -> None:
        pass

    def joint_capable(self) -> bool:
        return self.supports(NppQueryKind.JOINT)

    def data_log_likelihood(self, data) -> Optional[float]:
        """log P(X=data) when the model can marginalize a joint, else None."""
        return None


class FixedTableNpp(NppModel):
    """Constant outcome distribution; parameters never move."""

    trainable = False

    def __init__(self, probs):
        probs = np.asarray(probs, dtype=np.float64)
        if probs.ndim != 1 or probs.size == 0:
            raise ValueError("probs must be a non-empty vector")
        if np.any(probs < 0) or abs(float(probs.sum()) - 1.0) > _SIMPLEX_TOL:
            raise ValueError("probs must lie on the probability simplex")
        self.probs = probs
        self.n_outcomes = probs.size

    def supports(self, kind: NppQueryKind) -> bool:
        return kind in (NppQueryKind.PRIOR,
                        NppQueryKind.COND_CLASS_GIVEN_DATA)

    def forward(self, kind: NppQueryKind, data=None) -> np.ndarray:
        if not self.supports(kind):
            raise UnsupportedQueryKind(
                f"fixed table cannot answer {kind.value}")
        return _check_simplex(self.probs.copy())

    def backward(self, kind, data, upstream):
        return {}

    def parameters(self) -> dict:
        return {"probs": self.probs.copy()}


class SoftmaxLinearNpp(NppModel):
    """Linear layer with softmax over outcomes; conditional queries only."""

    def __init__(self, n_outcomes: int, n_features: int,
                 weights=None, bias=None):
        self.n_outcomes = int(n_outcomes)
        self.n_features = int(n_features)
        self.weights = (np.zeros((n_outcomes, n_features))
                        if weights is None
                        else np.asarray(weights, dtype=np.float64).copy())
        self.bias = (np.zeros(n_outcomes) if bias is None
                     else np.asarray(bias, dtype=np.float64).copy())
        if self.weights.shape != (self.n_outcomes, self.n_features):
            raise ValueError("weight shape mismatch")
        if self.bias.shape != (self.n_outcomes,):
            raise ValueError("bias shape mismatch")

    def supports(self, kind: NppQueryKind) -> bool:
        return kind is NppQueryKind.COND_CLASS_GIVEN_DATA

    def _features(self, data) -> np.ndarray:
        x = np.asarray(data, dtype=np.float64)
        if x.shape != (self.n_features,):
            raise ValueError(
                f"expected feature vector of length {self.n_features}, "
                f"got shape {x.shape}")
        return x

    def forward(self, kind: NppQueryKind, data=None) -> np.ndarray:
        if not self.supports(kind):
            raise UnsupportedQueryKind(
                f"softmax-linear model cannot answer {kind.value}")
        if data is None:
            raise ValueError("conditional query needs data")
        x = self._features(data)
        return _check_simplex(_softmax(self.weights @ x + self.bias))

    def backward(self, kind: NppQueryKind, data, upstream) -> dict:
        upstream = np.asarray(upstream, dtype=np.float64)
        if upstream.shape != (self.n_outcomes,):
            raise ValueError("upstream gradient shape mismatch")
        x = self._features(data)
        p = _softmax(self.weights @ x + self.bias)
        # softmax Jacobian-vector product: diag(p) - p p^T applied to upstream
        dlogits = p * (upstream - float(p @ upstream))
        return {"weights": np.outer(dlogits, x), "bias": dlogits}

    def parameters(self) -> dict:
        return {"weights": self.weights, "bias": self.bias}

    def set_parameters(self, params: dict) -> None:
        self.weights = np.asarray(params["weights"], dtype=np.float64)
        self.bias = np.asarray(params["bias"], dtype=np.float64)


class TabularJointNpp(NppModel):
    """Joint distribution over (data bin, outcome) as a softmax over logits.

    Answers all four query kinds by conditioning or marginalizing the joint.
    """

    def __init__(self, n_bins: int, n_outcomes: int, logits=None):
        self.n_bins = int(n_bins)
        self.n_outcomes = int(n_outcomes)
        self.logits = (np.zeros((n_bins, n_outcomes)) if logits is None
                       else np.asarray(logits, dtype=np.float64).copy())
        if self.logits.shape != (self.n_bins, self.n_outcomes):
            raise ValueError("logit shape mismatch")

    def supports(self, kind: NppQueryKind) -> bool:
        return True

    def joint(self) -> np.ndarray:
        flat = _softmax(self.logits.reshape(-1))
        return flat.reshape(self.n_bins, self.n_outcomes)

    def _bin(self, data) -> int:
        idx = int(data)
        if not 0 <= idx < self.n_bins:
            raise ValueError(f"bin index {idx} out of range")
        return idx

    def forward(self, kind: NppQueryKind, data=None) -> np.ndarray:
        joint = self.joint()
        if kind is NppQueryKind.COND_CLASS_GIVEN_DATA:
            row = joint[self._bin(data)]
            return _check_simplex(row / max(row.sum(), PROB_FLOOR))
        if kind is NppQueryKind.COND_DATA_GIVEN_CLASS:
            col = joint[:, self._class(data)]
            return _check_simplex(col / max(col.sum(), PROB_FLOOR))
        if kind is NppQueryKind.PRIOR:
            return _check_simplex(joint.sum(axis=0))
        if kind is NppQueryKind.JOINT:
            return _check_simplex(joint.reshape(-1))
        raise UnsupportedQueryKind(str(kind))

    def _class(self, data) -> int:
        idx = int(data)
        if not 0 <= idx < self.n_outcomes:
            raise ValueError(f"class index {idx} out of range")
        return idx

    def _joint_backward(self, grad_joint: np.ndarray) -> np.ndarray:
        """Pull a gradient on the joint table back to the logits."""
        joint = self.joint().reshape(-1)
        g = grad_joint.reshape(-1)
        dz = joint * (g - float(g @ joint))
        return dz.reshape(self.n_bins, self.n_outcomes)

    def backward(self, kind: NppQueryKind, data, upstream) -> dict:
        upstream = np.asarray(upstream, dtype=np.float64)
        joint = self.joint()
        grad_joint = np.zeros_like(joint)
        if kind is NppQueryKind.COND_CLASS_GIVEN_DATA:
            if upstream.shape != (self.n_outcomes,):
                raise ValueError("upstream gradient shape mismatch")
            i = self._bin(data)
            row = joint[i]
            s = row.sum()
            phi = float(upstream @ row) / s
            grad_joint[i] = (upstream - phi) / s
        elif kind is NppQueryKind.COND_DATA_GIVEN_CLASS:
            if upstream.shape != (self.n_bins,):
                raise ValueError("upstream gradient shape mismatch")
            c = self._class(data)
            col = joint[:, c]
            s = col.sum()
            phi = float(upstream @ col) / s
            grad_joint[:, c] = (upstream - phi) / s
        elif kind is NppQueryKind.PRIOR:
            if upstream.shape != (self.n_outcomes,):
                raise ValueError("upstream gradient shape mismatch")
            grad_joint[:] = upstream[None, :]
        elif kind is NppQueryKind.JOINT:
            if upstream.shape != (self.n_bins * self.n_outcomes,):
                raise ValueError("upstream gradient shape mismatch")
            grad_joint = upstream.reshape(self.n_bins, self.n_outcomes)
        else:
            raise UnsupportedQueryKind(str(kind))
        return {"logits": self._joint_backward(grad_joint)}

    def parameters(self) -> dict:
        return {"logits": self.logits}

    def set_parameters(self, params: dict) -> None:
        self.logits = np.asarray(params["logits"], dtype=np.float64)

    def data_log_likelihood(self, data) -> float:
        marginal = float(self.joint()[self._bin(data)].sum())
        return float(np.log(max(marginal, PROB_FLOOR)))


# --------------------------------------------------------------------------
# Module-level operations
# --------------------------------------------------------------------------

def npp_forward(model: NppModel, kind: NppQueryKind, data=None) -> np.ndarray:
    """Probability vector over the queried axis; always a simplex point."""
    return model.forward(kind, data)


def npp_backward(model: NppModel, data, upstream,
                 kind: NppQueryKind = NppQueryKind.COND_CLASS_GIVEN_DATA) -> dict:
    """Exact parameter gradient of ``upstream . forward`` (a JVP through
    softmax and any table normalization)."""
    return model.backward(kind, data, upstream)


def npp_loss_grad(model: TabularJointNpp, data_batch) -> tuple:
    """Data log-likelihood of a batch of bin indices and its logit gradient.

    The outcome axis is marginalized; ascending the returned gradient raises
    the likelihood.  Zero-probability bins are clamped at 1e-12 and flagged
    through the module logger.
    """
    if not model.joint_capable():
        raise UnsupportedQueryKind("model cannot marginalize a joint")
    bins = [int(b) for b in data_batch]
    if not bins:
        return 0.0, np.zeros_like(model.logits)
    joint = model.joint()
    marginal = joint.sum(axis=1)
    loss = 0.0
    grad_joint = np.zeros_like(joint)
    clamped = 0
    for b in bins:
        p = float(marginal[b])
        if p < PROB_FLOOR:
            p = PROB_FLOOR
            clamped += 1
        loss += float(np.log(p))
        grad_joint[b, :] += 1.0 / p
    if clamped:
        logging.getLogger(__name__).warning(
            "clamped %d zero-probability data bins at %g", clamped, PROB_FLOOR)
    grad = model._joint_backward(grad_joint)
    return loss, grad
