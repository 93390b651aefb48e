"""Benchmark harness and evaluation tests."""

import csv

import numpy as np
import pytest

from slash.bench import (bench, build_models, eval_accuracy, run_training,
                         write_shrinkage_csv)
from slash.ground import ground
from slash.lang import parse_program
from slash.learning import TrainConfig, _diverging
from slash.npp import NppModel, NppQueryKind, SoftmaxLinearNpp
from slash.pruning import PruneState
from slash.records import gen_sumN, load_records, sum_program_text


@pytest.fixture(scope="module")
def task(tmp_path_factory):
    out = tmp_path_factory.mktemp("task")
    paths = gen_sumN(2, 1000, 0.0, 2, out)
    return {"program": sum_program_text(2),
            "train": load_records(paths["train"]),
            "test": load_records(paths["test"])}


class _ArgmaxOracle(NppModel):
    """Perfect predictor for noise-free one-hot features."""

    trainable = False
    n_outcomes = 10

    def supports(self, kind):
        return kind is NppQueryKind.COND_CLASS_GIVEN_DATA

    def forward(self, kind, data=None):
        out = np.zeros(10)
        out[int(np.argmax(np.asarray(data)))] = 1.0
        return out


class TestEvalAccuracy:
    def test_untrained_uniform_model_is_chance_level(self, task):
        gp = ground(parse_program(task["program"]))
        models = {"digit": SoftmaxLinearNpp(10, 10)}
        acc = eval_accuracy(models, gp, task["train"] + task["test"])
        assert abs(acc - 0.1) <= 0.05

    def test_oracle_model_is_perfect(self, task):
        gp = ground(parse_program(task["program"]))
        acc = eval_accuracy({"digit": _ArgmaxOracle()}, gp,
                            task["train"] + task["test"])
        assert acc == 1.0

    def test_missing_labels_rejected(self, task):
        gp = ground(parse_program(task["program"]))
        record = task["test"][0]
        record_no_labels = type(record)(record.id, record.constraint,
                                        record.data, None)
        with pytest.raises(ValueError):
            eval_accuracy({"digit": _ArgmaxOracle()}, gp, [record_no_labels])


class TestBuildModels:
    def test_softmax_dimensions_from_records(self, task):
        models = build_models(task["program"], task["train"])
        assert models["digit"].weights.shape == (10, 10)

    def test_auto_selects_tabular_for_bins(self):
        from slash.records import QueryRecord
        program = "npp(d(a),[0,1]). hit :- d(+a,-V), V = 0."
        records = [QueryRecord("q", ":- not hit.", {"a": 3})]
        models = build_models(program, records, npp_kind="auto", n_bins=5)
        assert models["d"].logits.shape == (5, 2)


class TestBenchHarness:
    def test_failed_mode_marked_and_others_continue(self, tmp_path, task):
        cfg = TrainConfig(epochs=1, batch_size=8, learning_rate=0.3,
                          seed=0, k=1)
        result = bench("sum2", task["program"], task["train"][:24],
                       task["test"][:8], ["exact", "bogus"], cfg, tmp_path)
        assert result.per_mode["exact"]["status"] == "OK"
        assert result.per_mode["bogus"]["status"] == "FAILED"
        with open(tmp_path / "summary.csv") as handle:
            rows = {r[1]: r for r in list(csv.reader(handle))[1:]}
        assert rows["bogus"][5] == "FAILED"

    def test_speedup_computed_against_exact(self, tmp_path, task):
        cfg = TrainConfig(epochs=1, batch_size=8, learning_rate=0.3, seed=0)
        result = bench("sum2", task["program"], task["train"][:24],
                       task["test"][:8], ["exact", "same"], cfg, tmp_path)
        assert result.per_mode["exact"]["speedup_vs_exact"] == 1.0
        assert result.per_mode["same"]["speedup_vs_exact"] is not None


def test_shrinkage_csv_schema(tmp_path):
    state = PruneState(threshold=0.99)
    for counts in ([4, 6], [2, 2]):
        for c in counts:
            state.record_query(c)
        state.end_epoch()
    path = tmp_path / "s.csv"
    write_shrinkage_csv(state, path)
    with open(path) as handle:
        rows = list(csv.reader(handle))
    assert rows == [["epoch", "mean_solutions", "min", "max"],
                    ["1", "5", "4", "6"], ["2", "2", "2", "2"]]


def test_divergence_guard_trigger():
    assert not _diverging([0.5, 0.4, 0.3])
    assert not _diverging([0.5, 0.4, 0.45, 0.3])
    assert _diverging([0.5, 0.4, 0.3, 0.2])
    assert _diverging([0.9, 0.5, 0.4, 0.3, 0.2])
