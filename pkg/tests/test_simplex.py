import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stiminv.nn import Tensor
from stiminv.nn import tensor as T
from stiminv.simplex import simplex_project, simplex_project_op

from helpers import assert_grads_match


def qp_oracle(v, target_sum):
    """Exhaustive active-set QP for min ||w - v||^2 s.t. w >= 0, sum w = s.

    Tries every nonempty candidate active set; the projection is the
    feasible candidate with minimal distance (unique by convexity).
    """
    v = np.asarray(v, dtype=float)
    n = len(v)
    best, best_dist = None, np.inf
    for mask in range(1, 2**n):
        active = [i for i in range(n) if (mask >> i) & 1]
        lam = (v[active].sum() - target_sum) / len(active)
        w = np.zeros(n)
        w[active] = v[active] - lam
        if np.any(w[active] < -1e-12):
            continue
        dist = float(((w - v) ** 2).sum())
        if dist < best_dist:
            best, best_dist = w, dist
    return best


class TestProjectionValues:
    def test_feasible_point_is_fixed(self):
        np.testing.assert_array_equal(simplex_project([1.0, 1.0, 1.0]), [1.0, 1.0, 1.0])

    def test_uniform_shift(self):
        np.testing.assert_allclose(
            simplex_project([2.0, 0.0, 0.0], target_sum=3.0), [7 / 3, 1 / 3, 1 / 3], rtol=1e-15
        )

    def test_thresholding_clamps_negatives(self):
        np.testing.assert_allclose(
            simplex_project([5.0, -1.0, -1.0], target_sum=3.0), [3.0, 0.0, 0.0], atol=1e-15
        )

    def test_default_target_is_mean_one(self):
        w = simplex_project(np.array([9.0, -3.0, 0.4, 0.4, 0.1]))
        assert w.sum() == pytest.approx(5.0, abs=1e-9)

    def test_empty_vector_rejected(self):
        with pytest.raises(ValueError):
            simplex_project(np.array([]))

    def test_singleton(self):
        np.testing.assert_array_equal(simplex_project([-7.0]), [1.0])


@given(
    st.lists(st.floats(-50, 50), min_size=1, max_size=6),
    st.floats(0.5, 20),
)
@settings(max_examples=300, deadline=None)
def test_projection_matches_qp_oracle(values, target):
    v = np.array(values)
    w = simplex_project(v, target_sum=target)
    oracle = qp_oracle(v, target)
    np.testing.assert_allclose(w, oracle, atol=1e-10)


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=40))
@settings(max_examples=200, deadline=None)
def test_projection_constraints(values):
    v = np.array(values)
    w = simplex_project(v)
    assert np.all(w >= 0)
    assert abs(w.mean() - 1.0) < 1e-9
    np.testing.assert_allclose(simplex_project(w), w, atol=1e-9)  # idempotent


class TestProjectionOp:
    def test_gradient_matches_finite_differences(self):
        for seed in range(6):
            rng = np.random.default_rng(seed)
            v = Tensor(rng.normal(size=(5, 1), scale=2.0), requires_grad=True)
            coef = rng.normal(size=(5, 1))

            def loss_fn():
                w = simplex_project_op(v, grad_mode="active_set")
                return T.tsum(w * coef) + T.tsum(T.square(w)) * 0.3

            assert_grads_match(loss_fn, [v])

    def test_straight_through_differs_from_exact(self):
        rng = np.random.default_rng(0)
        v_data = rng.normal(size=(4, 1))
        grads = {}
        for mode in ("active_set", "straight_through"):
            v = Tensor(v_data.copy(), requires_grad=True)
            w = simplex_project_op(v, grad_mode=mode)
            T.tsum(w * np.array([[1.0], [2.0], [3.0], [4.0]])).backward()
            grads[mode] = v.grad.copy()
        assert not np.allclose(grads["active_set"], grads["straight_through"])

    def test_requires_column(self):
        with pytest.raises(ValueError):
            simplex_project_op(Tensor(np.ones((1, 3))))

    def test_unknown_grad_mode(self):
        with pytest.raises(ValueError):
            simplex_project_op(Tensor(np.ones((3, 1))), grad_mode="magic")
