"""Estimator API tests: sklearn conventions, validation, fit/predict."""

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from slash.estimator import (SlashClassifier, check_feature_matrix,
                             check_records)
from slash.records import QueryRecord, gen_sumN, load_records, sum_program_text


def make_records(rng, count, noise=0.2):
    records = []
    for i in range(count):
        d1, d2 = int(rng.integers(0, 10)), int(rng.integers(0, 10))
        data = {}
        for key, digit in (("i1", d1), ("i2", d2)):
            x = np.zeros(10)
            x[digit] = 1.0
            x += rng.normal(0, 1, 10) * noise
            data[key] = [float(v) for v in x]
        records.append(QueryRecord(
            f"q{i}", f":- not sum2(i1,i2,{d1 + d2}).", data,
            {"i1": d1, "i2": d2}))
    return records


class TestValidationHelpers:
    def test_feature_matrix_reshapes_vectors(self):
        X = check_feature_matrix([1.0, 2.0, 3.0])
        assert X.shape == (1, 3)

    def test_feature_matrix_rejects_nan(self):
        with pytest.raises(ValueError):
            check_feature_matrix([[np.nan, 1.0]])

    def test_feature_matrix_width_check(self):
        with pytest.raises(ValueError):
            check_feature_matrix([[1.0, 2.0]], n_features=3)

    def test_records_from_path(self, tmp_path):
        paths = gen_sumN(2, 10, 0.1, 0, tmp_path)
        records = check_records(paths["train"])
        assert all(isinstance(r, QueryRecord) for r in records)

    def test_records_reject_foreign_objects(self):
        with pytest.raises(TypeError):
            check_records([{"id": "x"}])


class TestSklearnConventions:
    def test_get_params_round_trip(self):
        clf = SlashClassifier(program="p.", epochs=3, learning_rate=0.2)
        params = clf.get_params()
        assert params["epochs"] == 3
        assert params["learning_rate"] == 0.2
        clf2 = SlashClassifier(**params)
        assert clf2.get_params() == params

    def test_set_params_chains(self):
        clf = SlashClassifier().set_params(mode="same", threshold=0.9)
        assert clf.mode == "same"
        assert clf.threshold == 0.9

    def test_clone(self):
        clf = SlashClassifier(program="p.", mode="topk", k=4)
        other = clone(clf)
        assert other.get_params() == clf.get_params()

    def test_predict_before_fit_raises(self):
        with pytest.raises(NotFittedError):
            SlashClassifier(program="p.").predict([[1.0]])


class TestFitPredict:
    def test_fit_predict_score(self):
        rng = np.random.default_rng(0)
        records = make_records(rng, 160)
        clf = SlashClassifier(program=sum_program_text(2), npp="digit",
                              epochs=4, learning_rate=0.3, batch_size=8,
                              seed=0)
        assert clf.fit(records) is clf
        X = np.eye(10)
        proba = clf.predict_proba(X)
        assert proba.shape == (10, 10)
        np.testing.assert_allclose(proba.sum(axis=1), 1.0, atol=1e-9)
        predictions = clf.predict(X)
        # clean one-hots should mostly map to their own digit
        assert (predictions == np.arange(10)).mean() >= 0.8
        assert 0.0 <= clf.score(X, np.arange(10)) <= 1.0
        assert list(clf.classes_) == list(range(10))

    def test_untrained_program_required(self):
        with pytest.raises(ValueError):
            SlashClassifier(program="").fit([QueryRecord("q", ":- p.", {})])

    def test_unknown_npp_name(self):
        rng = np.random.default_rng(1)
        records = make_records(rng, 10)
        clf = SlashClassifier(program=sum_program_text(2), npp="nonesuch",
                              epochs=1)
        with pytest.raises(ValueError):
            clf.fit(records)

    def test_argmax_ties_break_to_lowest_index(self):
        rng = np.random.default_rng(2)
        records = make_records(rng, 10)
        clf = SlashClassifier(program=sum_program_text(2), npp="digit",
                              epochs=1, learning_rate=0.0)
        clf.fit(records)
        # zero-init model gives a uniform distribution: argmax picks class 0
        assert clf.predict(np.zeros((1, 10)))[0] == 0
