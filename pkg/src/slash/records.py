"""Query records, JSONL serialization, synthetic sum tasks, checkpoints.

A query record pairs one training example's constraint with the data fed to
the NPP instances it grounds over: ``{"id", "constraint", "data", "labels"?}``
one JSON object per line.  Data values are feature vectors (lists of floats)
or bin indices (ints); labels map instances to ground-truth outcomes and are
used for evaluation only.

Checkpoints store named parameter tensors with shape headers as JSON behind
the magic string ``SLASHNPP1``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .npp import FixedTableNpp, NppModel, SoftmaxLinearNpp, TabularJointNpp

__all__ = [
    "QueryRecord",
    "load_records",
    "save_records",
    "gen_sumN",
    "sum_program_text",
    "save_models",
    "load_models",
    "CHECKPOINT_MAGIC",
]

CHECKPOINT_MAGIC = "SLASHNPP1"


@dataclass
class QueryRecord:
    id: str
    constraint: str
    data: dict = field(default_factory=dict)
    labels: Optional[dict] = None

    def to_json(self) -> str:
        payload = {"id": self.id, "constraint": self.constraint,
                   "data": self.data}
        if self.labels is not None:
            payload["labels"] = self.labels
        return json.dumps(payload)

    @classmethod
    def from_json(cls, line: str) -> "QueryRecord":
        raw = json.loads(line)
        return cls(id=str(raw["id"]), constraint=raw["constraint"],
                   data=raw.get("data", {}), labels=raw.get("labels"))


def load_records(path) -> list:
    records = []
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                records.append(QueryRecord.from_json(line))
    return records


def save_records(records, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(record.to_json() + "\n")


# --------------------------------------------------------------------------
# Synthetic digit-sum tasks
# --------------------------------------------------------------------------

def sum_program_text(n: int) -> str:
    """Program for the n-image digit-sum task with fixed instances i1..in."""
    instances = [f"i{j}" for j in range(1, n + 1)]
    lines = [f"img({name})." for name in instances]
    lines.append("npp(digit(X),[0..9]) :- img(X).")
    body = ", ".join(f"digit(+{name},-N{j})"
                     for j, name in enumerate(instances, start=1))
    total = " + ".join(f"N{j}" for j in range(1, n + 1))
    head = f"sum{n}({','.join(instances)},S)"
    lines.append(f"{head} :- {body}, S = {total}.")
    return "\n".join(lines) + "\n"


def gen_sumN(n: int, samples: int, noise: float, seed: int,
             out_dir) -> dict:
    """Generate the sum-n task: program file plus 80/20 train/test records.

    Each sample draws n digits uniformly, encodes every digit as a one-hot
    vector plus Gaussian noise scaled by ``noise``, and states the true sum
    as the query constraint.  Labels carry the digits for evaluation only.
    Everything is determined by the seed.
    """
    if n not in (2, 3, 4):
        raise ValueError("supported task sizes are 2, 3 and 4")
    if not 0.0 <= noise < 1.0:
        raise ValueError("noise must lie in [0, 1)")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    instances = [f"i{j}" for j in range(1, n + 1)]

    records = []
    for i in range(samples):
        digits = rng.integers(0, 10, size=n)
        data = {}
        labels = {}
        for name, digit in zip(instances, digits):
            features = np.zeros(10)
            features[digit] = 1.0
            features += rng.normal(0.0, 1.0, size=10) * noise
            data[name] = [float(v) for v in features]
            labels[name] = int(digit)
        total = int(digits.sum())
        constraint = f":- not sum{n}({','.join(instances)},{total})."
        records.append(QueryRecord(
            id=f"q{i:05d}", constraint=constraint, data=data, labels=labels))

    n_train = int(round(samples * 0.8))
    program_path = out_dir / f"sum{n}.slash"
    train_path = out_dir / "train.jsonl"
    test_path = out_dir / "test.jsonl"
    program_path.write_text(sum_program_text(n), encoding="utf-8")
    save_records(records[:n_train], train_path)
    save_records(records[n_train:], test_path)
    return {"program": program_path, "train": train_path, "test": test_path}


# --------------------------------------------------------------------------
# Model checkpoints
# --------------------------------------------------------------------------

def _model_payload(model: NppModel) -> dict:
    if isinstance(model, SoftmaxLinearNpp):
        return {"type": "softmax_linear",
                "n_outcomes": model.n_outcomes,
                "n_features": model.n_features,
                "shapes": {"weights": list(model.weights.shape),
                           "bias": list(model.bias.shape)},
                "params": {"weights": model.weights.reshape(-1).tolist(),
                           "bias": model.bias.tolist()}}
    if isinstance(model, TabularJointNpp):
        return {"type": "tabular_joint",
                "n_bins": model.n_bins,
                "n_outcomes": model.n_outcomes,
                "shapes": {"logits": list(model.logits.shape)},
                "params": {"logits": model.logits.reshape(-1).tolist()}}
    if isinstance(model, FixedTableNpp):
        return {"type": "fixed_table",
                "n_outcomes": model.n_outcomes,
                "shapes": {"probs": [model.n_outcomes]},
                "params": {"probs": model.probs.tolist()}}
    raise TypeError(f"cannot checkpoint model of type {type(model).__name__}")


def save_models(models: dict, path) -> None:
    payload = {"magic": CHECKPOINT_MAGIC,
               "models": {name: _model_payload(m)
                          for name, m in models.items()}}
    Path(path).write_text(json.dumps(payload), encoding="utf-8")


def load_models(path) -> dict:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("magic") != CHECKPOINT_MAGIC:
        raise ValueError(f"not a {CHECKPOINT_MAGIC} checkpoint: {path}")
    models: dict = {}
    for name, entry in payload["models"].items():
        kind = entry["type"]
        if kind == "softmax_linear":
            shape = tuple(entry["shapes"]["weights"])
            models[name] = SoftmaxLinearNpp(
                entry["n_outcomes"], entry["n_features"],
                weights=np.asarray(entry["params"]["weights"]).reshape(shape),
                bias=np.asarray(entry["params"]["bias"]))
        elif kind == "tabular_joint":
            shape = tuple(entry["shapes"]["logits"])
            models[name] = TabularJointNpp(
                entry["n_bins"], entry["n_outcomes"],
                logits=np.asarray(entry["params"]["logits"]).reshape(shape))
        elif kind == "fixed_table":
            models[name] = FixedTableNpp(np.asarray(entry["params"]["probs"]))
        else:
            raise ValueError(f"unknown model type {kind!r} in checkpoint")
    return models
