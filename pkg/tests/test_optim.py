import math

import numpy as np
import pytest

from sparsepaint.autodiff import Adam, AdamState, Tensor, adam_step, weight_normalize


def adam_oracle(theta, grads, lr=5e-5, b1=0.9, b2=0.999, eps=1e-8):
    """Scalar Adam recurrence written out step by step."""
    m = v = 0.0
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        theta = theta - lr * m_hat / (math.sqrt(v_hat) + eps)
    return theta


def test_zero_gradient_leaves_parameters():
    p = {"w": Tensor(np.array([1.0, -2.0]))}
    state = AdamState()
    for _ in range(3):
        adam_step(p, {"w": np.zeros(2)}, state)
    assert p["w"].data.tolist() == [1.0, -2.0]


def test_first_step_moves_by_lr():
    p = {"w": Tensor(np.array([0.3]))}
    adam_step(p, {"w": np.array([1.0])}, AdamState())
    assert 0.3 - p["w"].data[0] == pytest.approx(5e-5, rel=1e-6)


def test_matches_scalar_recurrence():
    grads = [0.5, -1.2, 3.0, 0.0, 0.7, -0.1]
    p = {"w": Tensor(np.array([0.9]))}
    state = AdamState()
    for g in grads:
        adam_step(p, {"w": np.array([g])}, state, lr=1e-2)
    assert p["w"].data[0] == pytest.approx(adam_oracle(0.9, grads, lr=1e-2), abs=1e-12)
    assert state.t == len(grads)


def test_shape_mismatch():
    p = {"w": Tensor(np.zeros(3))}
    with pytest.raises(ValueError):
        adam_step(p, {"w": np.zeros(2)}, AdamState())


def test_class_is_deterministic():
    def run():
        rng = np.random.default_rng(0)
        p = {"a": Tensor(rng.standard_normal((2, 3)), requires_grad=True)}
        opt = Adam(p, lr=1e-3)
        for _ in range(5):
            p["a"].grad = rng.standard_normal((2, 3))
            opt.step()
            opt.zero_grad()
        return p["a"].data

    assert np.array_equal(run(), run())


def test_normalize_three_four_five():
    p = {"w": Tensor(np.array([[3.0, 4.0]])), "b": Tensor(np.array([0.0]))}
    weight_normalize(p, [("w", "b")])
    np.testing.assert_allclose(p["w"].data, [[0.6, 0.8]], atol=1e-15)
    p = {"w": Tensor(np.array([[3.0]])), "b": Tensor(np.array([4.0]))}
    weight_normalize(p, [("w", "b")])
    np.testing.assert_allclose([p["w"].data[0, 0], p["b"].data[0]], [0.6, 0.8], atol=1e-15)


def test_normalize_random_and_idempotent():
    rng = np.random.default_rng(1)
    p = {"w": Tensor(rng.standard_normal((4, 2, 5, 5))), "b": Tensor(rng.standard_normal(4))}
    weight_normalize(p, [("w", "b")])
    norms = np.sqrt((p["w"].data.reshape(4, -1) ** 2).sum(1) + p["b"].data ** 2)
    np.testing.assert_allclose(norms, 1.0, atol=1e-6)
    before = (p["w"].data.copy(), p["b"].data.copy())
    weight_normalize(p, [("w", "b")])
    np.testing.assert_allclose(p["w"].data, before[0], atol=1e-12)
    np.testing.assert_allclose(p["b"].data, before[1], atol=1e-12)


def test_zero_filter_reported_not_raised():
    w = np.ones((2, 1, 2, 2))
    w[1] = 0
    p = {"w": Tensor(w), "b": Tensor(np.zeros(2))}
    zero = weight_normalize(p, [("w", "b")])
    assert zero == [("w", 1)]
    assert np.all(p["w"].data[1] == 0)
    np.testing.assert_allclose(p["w"].data[0], 0.5)
