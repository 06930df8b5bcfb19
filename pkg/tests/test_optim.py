import numpy as np
import pytest

from rhfl.errors import UsageError
from rhfl.gradcheck import finite_difference_gradient
from rhfl.optim import AdamState, adam_step
from rhfl.tensor import Tensor


def test_zero_gradients_leave_params_and_moments():
    p = Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)
    state = AdamState.for_params([p])
    adam_step([p], [np.zeros(3)], state)
    assert p.data.tolist() == [1.0, -2.0, 3.0]
    assert state.first_moment[0].tolist() == [0.0, 0.0, 0.0]
    assert state.second_moment[0].tolist() == [0.0, 0.0, 0.0]
    assert state.step_count == 1


def test_first_step_moves_by_learning_rate():
    # by hand: m = 0.1, v = 0.001, m_hat = v_hat = 1, step = 0.001 * 1 / (1 + 1e-8)
    p = Tensor(np.array([0.5]), requires_grad=True)
    state = AdamState.for_params([p], learning_rate=0.001)
    adam_step([p], [np.array([1.0])], state)
    expected = 0.5 - 0.001 * 1.0 / (1.0 + 1e-8)
    assert p.data[0] == pytest.approx(expected, abs=1e-15)
    assert abs(0.5 - p.data[0]) == pytest.approx(0.001, rel=1e-7)


def test_equal_gradients_equal_updates():
    a = Tensor(np.array([0.3]), requires_grad=True)
    b = Tensor(np.array([0.3]), requires_grad=True)
    state = AdamState.for_params([a, b])
    for g in (0.7, -0.2, 1.5):
        adam_step([a, b], [np.array([g]), np.array([g])], state)
    assert a.data[0] == b.data[0]


def test_step_count_increments_by_one():
    p = Tensor(np.zeros(2), requires_grad=True)
    state = AdamState.for_params([p])
    for i in range(1, 4):
        adam_step([p], [np.ones(2)], state)
        assert state.step_count == i


def test_missing_gradient_is_usage_error():
    p = Tensor(np.zeros(2), requires_grad=True)
    with pytest.raises(UsageError):
        adam_step([p], [None], AdamState.for_params([p]))


# the finite-difference oracle itself

def test_fd_quadratic():
    (g,) = finite_difference_gradient(lambda ps: float(ps[0][0] ** 2), [np.array([3.0])], 1e-5)
    assert g[0] == pytest.approx(6.0, abs=1e-6)


def test_fd_constant_is_zero():
    (g,) = finite_difference_gradient(lambda ps: 4.2, [np.ones((2, 3))], 1e-5)
    assert np.all(np.abs(g) < 1e-9)


def test_fd_rejects_nonpositive_step():
    with pytest.raises(UsageError):
        finite_difference_gradient(lambda ps: 0.0, [np.ones(1)], 0.0)
