import numpy as np
import pytest

from sparsepaint.autodiff import (
    BinarizationMode,
    Tensor,
    binarize,
    grad_check,
    hard_sigmoid,
    straight_through_surrogate,
    tsum,
)

MODES = list(BinarizationMode)


def test_hard_rounding_table_values():
    out = binarize(Tensor(np.array([0.0, 0.4, 0.49999, 0.5, 0.7, 1.0])))
    assert out.data.tolist() == [0.0, 0.0, 0.0, 1.0, 1.0, 1.0]


@pytest.mark.parametrize("mode", MODES)
def test_outputs_are_binary(mode):
    c = np.random.default_rng(0).random((3, 1, 9, 9))
    out = binarize(Tensor(c), mode, np.random.default_rng(1))
    assert set(np.unique(out.data)) <= {0.0, 1.0}
    assert out.dtype == c.dtype


@pytest.mark.parametrize("mode", MODES)
def test_backward_passes_upstream_verbatim(mode):
    rng = np.random.default_rng(2)
    c = Tensor(rng.random((2, 1, 5, 5)), requires_grad=True)
    upstream = rng.standard_normal((2, 1, 5, 5))
    tsum(binarize(c, mode, np.random.default_rng(3)) * Tensor(upstream)).backward()
    assert np.array_equal(c.grad, upstream)


@pytest.mark.parametrize("c", [0.25, 0.6])
def test_stochastic_rate(c):
    out = binarize(Tensor(np.full(100_000, c)), "stochastic_rounding", np.random.default_rng(4))
    assert out.data.mean() == pytest.approx(c, abs=0.01)


def test_additive_noise_rate():
    # 1 exactly when c + eps >= 0.5 with eps ~ U[0, 0.5]
    out = binarize(Tensor(np.full(100_000, 0.3)), "additive_noise", np.random.default_rng(5))
    assert out.data.mean() == pytest.approx(0.6, abs=0.01)
    assert binarize(Tensor(np.zeros(1000)), "additive_noise", np.random.default_rng(6)).data.max() == 0.0
    assert binarize(Tensor(np.full(1000, 0.5)), "additive_noise", np.random.default_rng(6)).data.min() == 1.0


def test_seeded_determinism():
    c = Tensor(np.random.default_rng(7).random(500))
    for mode in ("stochastic_rounding", "additive_noise"):
        a = binarize(c, mode, np.random.default_rng(8)).data
        b = binarize(c, mode, np.random.default_rng(8)).data
        assert np.array_equal(a, b)


@pytest.mark.parametrize("bad", [-0.01, 1.01, np.nan])
def test_domain_error(bad):
    with pytest.raises(ValueError):
        binarize(Tensor(np.array([0.5, bad])))


@pytest.mark.parametrize("mode", ["stochastic_rounding", "additive_noise"])
def test_stochastic_modes_need_generator(mode):
    with pytest.raises(ValueError):
        binarize(Tensor(np.array([0.5])), mode)


def test_surrogate_is_identity_forward():
    c = Tensor(np.array([0.2, 0.7]))
    with straight_through_surrogate():
        assert np.array_equal(binarize(c).data, c.data)
    assert binarize(c).data.tolist() == [0.0, 1.0]


def test_grad_check_flags_binarize():
    rng = np.random.default_rng(9)
    x = rng.uniform(-2, 2, (1, 1, 4, 4))
    proj = Tensor(rng.standard_normal((1, 1, 4, 4)))
    report = grad_check(lambda t: tsum(binarize(hard_sigmoid(t)) * proj), x)
    assert report.excluded and report.excluded[0].startswith("binarize")
    assert report.passed()
