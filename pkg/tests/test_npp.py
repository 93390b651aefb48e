"""NPP model tests: query kinds, forward distributions, gradient checks."""

import numpy as np
import pytest

from slash.npp import (FixedTableNpp, NppQueryKind, SoftmaxLinearNpp,
                       TabularJointNpp, UnsupportedQueryKind, npp_backward,
                       npp_forward, npp_loss_grad)

CCD = NppQueryKind.COND_CLASS_GIVEN_DATA
CDC = NppQueryKind.COND_DATA_GIVEN_CLASS
JOINT = NppQueryKind.JOINT
PRIOR = NppQueryKind.PRIOR


def tabular_2x2():
    # joint [[0.4, 0.1], [0.2, 0.3]] realized through logits
    model = TabularJointNpp(2, 2)
    model.logits = np.log(np.array([[0.4, 0.1], [0.2, 0.3]]))
    return model


class TestForward:
    def test_prior_is_column_marginal(self):
        np.testing.assert_allclose(
            npp_forward(tabular_2x2(), PRIOR), [0.6, 0.4], atol=1e-12)

    def test_conditional_is_row_normalization(self):
        np.testing.assert_allclose(
            npp_forward(tabular_2x2(), CCD, 0), [0.8, 0.2], atol=1e-12)

    def test_data_given_class_is_column_normalization(self):
        np.testing.assert_allclose(
            npp_forward(tabular_2x2(), CDC, 0), [0.4 / 0.6, 0.2 / 0.6],
            atol=1e-12)

    def test_joint_is_full_table(self):
        np.testing.assert_allclose(
            npp_forward(tabular_2x2(), JOINT), [0.4, 0.1, 0.2, 0.3],
            atol=1e-12)

    def test_zero_weight_softmax_is_uniform(self):
        model = SoftmaxLinearNpp(5, 3)
        out = npp_forward(model, CCD, [0.3, -2.0, 11.0])
        np.testing.assert_allclose(out, np.full(5, 0.2), atol=1e-15)

    def test_every_output_is_simplex(self):
        rng = np.random.default_rng(5)
        model = TabularJointNpp(4, 6, logits=rng.normal(size=(4, 6)))
        for kind, data in ((CCD, 2), (CDC, 3), (PRIOR, None), (JOINT, None)):
            out = npp_forward(model, kind, data)
            assert np.all(out >= 0)
            assert abs(out.sum() - 1.0) <= 1e-9

    def test_softmax_rejects_non_conditional(self):
        model = SoftmaxLinearNpp(3, 2)
        for kind in (PRIOR, JOINT, CDC):
            with pytest.raises(UnsupportedQueryKind):
                npp_forward(model, kind, None)

    def test_fixed_table_immutable_semantics(self):
        model = FixedTableNpp([0.25, 0.75])
        np.testing.assert_array_equal(
            npp_forward(model, PRIOR), [0.25, 0.75])
        with pytest.raises(UnsupportedQueryKind):
            npp_forward(model, JOINT)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            npp_forward(SoftmaxLinearNpp(3, 4), CCD, [1.0, 2.0])
        with pytest.raises(ValueError):
            npp_forward(tabular_2x2(), CCD, 9)


def finite_difference(forward, params: np.ndarray, upstream: np.ndarray,
                      h: float = 1e-5) -> np.ndarray:
    """Central differences of upstream . forward(params)."""
    grad = np.zeros_like(params)
    flat = params.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        hi = float(upstream @ forward())
        flat[i] = orig - h
        lo = float(upstream @ forward())
        flat[i] = orig
        out[i] = (hi - lo) / (2 * h)
    return grad


class TestBackward:
    def test_softmax_matches_finite_differences(self):
        rng = np.random.default_rng(42)
        for _ in range(100):
            n, d = int(rng.integers(2, 6)), int(rng.integers(1, 5))
            model = SoftmaxLinearNpp(n, d,
                                     weights=rng.normal(size=(n, d)) * 0.5,
                                     bias=rng.normal(size=n) * 0.5)
            x = rng.normal(size=d)
            upstream = rng.normal(size=n)
            grad = npp_backward(model, x, upstream, CCD)
            fd_w = finite_difference(
                lambda: model.forward(CCD, x), model.weights, upstream)
            fd_b = finite_difference(
                lambda: model.forward(CCD, x), model.bias, upstream)
            scale = max(1.0, np.abs(fd_w).max())
            np.testing.assert_allclose(grad["weights"], fd_w,
                                       atol=1e-6 * scale)
            np.testing.assert_allclose(grad["bias"], fd_b, atol=1e-6)

    @pytest.mark.parametrize("kind,data_of", [
        (CCD, lambda rng, m, n: int(rng.integers(0, m))),
        (CDC, lambda rng, m, n: int(rng.integers(0, n))),
        (PRIOR, lambda rng, m, n: None),
        (JOINT, lambda rng, m, n: None),
    ])
    def test_tabular_matches_finite_differences(self, kind, data_of):
        rng = np.random.default_rng(7)
        for _ in range(25):
            m, n = int(rng.integers(2, 5)), int(rng.integers(2, 5))
            model = TabularJointNpp(m, n, logits=rng.normal(size=(m, n)))
            data = data_of(rng, m, n)
            size = {CCD: n, CDC: m, PRIOR: n, JOINT: m * n}[kind]
            upstream = rng.normal(size=size)
            grad = npp_backward(model, data, upstream, kind)["logits"]
            fd = finite_difference(
                lambda: model.forward(kind, data), model.logits, upstream)
            np.testing.assert_allclose(grad, fd, atol=1e-6)

    def test_zero_upstream_zero_gradient(self):
        model = SoftmaxLinearNpp(4, 3, weights=np.ones((4, 3)))
        grad = npp_backward(model, [1.0, 2.0, 3.0], np.zeros(4), CCD)
        assert not grad["weights"].any()
        assert not grad["bias"].any()

    def test_softmax_two_equal_logits_hand_value(self):
        # n=2, equal logits, upstream (1, -1): logit gradient (+0.5, -0.5)
        model = SoftmaxLinearNpp(2, 1, weights=np.zeros((2, 1)))
        grad = npp_backward(model, [0.0], np.array([1.0, -1.0]), CCD)
        np.testing.assert_allclose(grad["bias"], [0.5, -0.5], atol=1e-12)

    def test_shape_mismatch(self):
        model = SoftmaxLinearNpp(3, 2)
        with pytest.raises(ValueError):
            npp_backward(model, [1.0, 2.0], np.zeros(5), CCD)


class TestNppLoss:
    def test_empty_batch(self):
        loss, grad = npp_loss_grad(TabularJointNpp(3, 2), [])
        assert loss == 0.0
        assert not grad.any()

    def test_uniform_table_single_sample(self):
        loss, _ = npp_loss_grad(TabularJointNpp(2, 2), [0])
        np.testing.assert_allclose(loss, np.log(0.5), atol=1e-12)

    def test_ascent_concentrates_marginal(self):
        model = TabularJointNpp(4, 3)
        for _ in range(1000):
            _, grad = npp_loss_grad(model, [0, 0, 0, 0])
            model.logits += 0.5 * grad / 4
        assert float(model.joint()[0].sum()) > 0.99

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(11)
        model = TabularJointNpp(3, 2, logits=rng.normal(size=(3, 2)))
        batch = [0, 2, 2, 1]
        _, grad = npp_loss_grad(model, batch)
        h = 1e-6
        fd = np.zeros_like(model.logits)
        flat = model.logits.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            hi = npp_loss_grad(model, batch)[0]
            flat[i] = orig - h
            lo = npp_loss_grad(model, batch)[0]
            flat[i] = orig
            fd.reshape(-1)[i] = (hi - lo) / (2 * h)
        np.testing.assert_allclose(grad, fd, atol=1e-5)

    def test_softmax_model_rejected(self):
        with pytest.raises(UnsupportedQueryKind):
            npp_loss_grad(SoftmaxLinearNpp(3, 2), [0])


def test_fixed_table_bit_identical_after_training_style_updates():
    model = FixedTableNpp([0.5, 0.5])
    before = model.probs.tobytes()
    grad = model.backward(PRIOR, None, np.array([1.0, -1.0]))
    assert grad == {}
    assert model.probs.tobytes() == before
