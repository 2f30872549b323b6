import numpy as np
import pytest

from sparsepaint.autodiff import (
    DimensionError,
    Tensor,
    concat,
    conv2d,
    elu,
    grad_check,
    hard_sigmoid,
    leaky_relu,
    matmul,
    maxpool2x2,
    no_grad,
    reshape,
    tabs,
    tconv2d,
    tmean,
    topological_order,
    tsum,
    upsample2x2,
)
from sparsepaint.autodiff.ops import same_padding, spacing

SEEDS = range(5)


def conv_loop(x, w, dilation, stride=1):
    """Cross-correlation written as explicit loops over every output tap."""
    B, C, H, W = x.shape
    O, _, k, _ = w.shape
    sp = spacing(dilation)
    pad = same_padding(k, dilation)
    Ho = (H + 2 * pad - sp * (k - 1) - 1) // stride + 1
    Wo = (W + 2 * pad - sp * (k - 1) - 1) // stride + 1
    out = np.zeros((B, O, Ho, Wo))
    for b in range(B):
        for o in range(O):
            for i in range(Ho):
                for j in range(Wo):
                    acc = 0.0
                    for c in range(C):
                        for di in range(k):
                            for dj in range(k):
                                y = i * stride + di * sp - pad
                                xx = j * stride + dj * sp - pad
                                if 0 <= y < H and 0 <= xx < W:
                                    acc += x[b, c, y, xx] * w[o, c, di, dj]
                    out[b, o, i, j] = acc
    return out


def tconv_loop(y, w, dilation):
    """Scatter form of the transposed convolution: every input value spreads over the kernel."""
    B, Ci, H, W = y.shape
    _, Co, k, _ = w.shape
    sp = spacing(dilation)
    pad = same_padding(k, dilation)
    out = np.zeros((B, Co, H, W))
    for b in range(B):
        for ci in range(Ci):
            for i in range(H):
                for j in range(W):
                    for co in range(Co):
                        for di in range(k):
                            for dj in range(k):
                                p, q = i + di * sp - pad, j + dj * sp - pad
                                if 0 <= p < H and 0 <= q < W:
                                    out[b, co, p, q] += y[b, ci, i, j] * w[ci, co, di, dj]
    return out


# --- forward oracles -------------------------------------------------------


def test_conv_zero_kernel():
    out = conv2d(Tensor(np.ones((1, 1, 3, 3))), Tensor(np.zeros((1, 1, 5, 5))))
    np.testing.assert_array_equal(out.data, 0.0)


@pytest.mark.parametrize("dilation", [0, 2, 5])
def test_conv_identity_kernel(dilation):
    x = np.random.default_rng(0).random((2, 1, 6, 7))
    w = np.zeros((1, 1, 5, 5))
    w[0, 0, 2, 2] = 1.0
    np.testing.assert_array_equal(conv2d(Tensor(x), Tensor(w), dilation=dilation).data, x)


@pytest.mark.parametrize("dilation, stride", [(0, 1), (2, 1), (5, 1), (0, 2), (2, 2)])
def test_conv_matches_loop(dilation, stride):
    rng = np.random.default_rng(1)
    x = rng.standard_normal((1, 2, 8, 8))
    w = rng.standard_normal((3, 2, 5, 5))
    out = conv2d(Tensor(x), Tensor(w), dilation=dilation, stride=stride).data
    np.testing.assert_allclose(out, conv_loop(x, w, dilation, stride), atol=1e-6)


def test_conv_bias_and_channel_check():
    x = np.zeros((1, 2, 4, 4))
    out = conv2d(Tensor(x), Tensor(np.zeros((3, 2, 5, 5))), Tensor(np.array([1.0, 2.0, 3.0])))
    assert out.data[0, :, 0, 0].tolist() == [1.0, 2.0, 3.0]
    with pytest.raises(DimensionError):
        conv2d(Tensor(x), Tensor(np.zeros((3, 4, 5, 5))))
    with pytest.raises(DimensionError):
        tconv2d(Tensor(x), Tensor(np.zeros((3, 2, 5, 5))))


def test_tconv_zero_kernel():
    out = tconv2d(Tensor(np.ones((1, 2, 4, 4))), Tensor(np.zeros((2, 3, 5, 5))))
    assert out.shape == (1, 3, 4, 4)
    np.testing.assert_array_equal(out.data, 0.0)


@pytest.mark.parametrize("dilation", [0, 2, 5])
def test_tconv_matches_loop(dilation):
    rng = np.random.default_rng(2)
    y = rng.standard_normal((2, 2, 6, 6))
    w = rng.standard_normal((2, 3, 5, 5))
    np.testing.assert_allclose(tconv2d(Tensor(y), Tensor(w), dilation=dilation).data, tconv_loop(y, w, dilation), atol=1e-6)


@pytest.mark.parametrize("dilation", [0, 2, 5])
def test_tconv_is_conv_input_gradient(dilation):
    rng = np.random.default_rng(3)
    x = Tensor(rng.standard_normal((2, 3, 6, 6)), requires_grad=True)
    w = rng.standard_normal((4, 3, 5, 5))
    g = rng.standard_normal((2, 4, 6, 6))
    conv2d(x, Tensor(w), dilation=dilation).backward(g)
    np.testing.assert_allclose(tconv2d(Tensor(g), Tensor(w), dilation=dilation).data, x.grad, atol=1e-12)


@pytest.mark.parametrize("seed", SEEDS)
@pytest.mark.parametrize("dilation", [0, 2, 5])
def test_adjoint_identity(seed, dilation):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((2, 3, 8, 8))
    w = rng.standard_normal((4, 3, 5, 5))
    y = rng.standard_normal((2, 4, 8, 8))
    lhs = np.sum(conv2d(Tensor(x), Tensor(w), dilation=dilation).data * y)
    rhs = np.sum(x * tconv2d(Tensor(y), Tensor(w), dilation=dilation).data)
    assert lhs == pytest.approx(rhs, rel=1e-5)


def test_pool_and_upsample_constant():
    x = Tensor(np.full((1, 2, 4, 6), 0.7))
    pooled = maxpool2x2(x)
    assert pooled.shape == (1, 2, 2, 3)
    np.testing.assert_array_equal(pooled.data, 0.7)
    np.testing.assert_array_equal(upsample2x2(pooled).data, x.data)


def test_pool_matches_window_max():
    x = np.random.default_rng(4).random((2, 3, 4, 4))
    out = maxpool2x2(Tensor(x)).data
    for b in range(2):
        for c in range(3):
            for i in range(2):
                for j in range(2):
                    assert out[b, c, i, j] == max(x[b, c, 2 * i + di, 2 * j + dj] for di in (0, 1) for dj in (0, 1))


def test_pool_odd_dims():
    with pytest.raises(DimensionError):
        maxpool2x2(Tensor(np.zeros((1, 1, 3, 4))))


def test_pool_tie_routes_to_first():
    x = Tensor(np.ones((1, 1, 2, 2)), requires_grad=True)
    maxpool2x2(x).backward(np.array([[[[5.0]]]]))
    assert x.grad[0, 0].tolist() == [[5.0, 0.0], [0.0, 0.0]]


def test_upsample_backward_sums_children():
    x = Tensor(np.zeros((1, 1, 1, 2)), requires_grad=True)
    upsample2x2(x).backward(np.arange(8.0).reshape(1, 1, 2, 4))
    assert x.grad.ravel().tolist() == [0 + 1 + 4 + 5, 2 + 3 + 6 + 7]


def test_activation_values():
    assert elu(Tensor(np.array(0.0))).item() == 0.0
    assert hard_sigmoid(Tensor(np.array(0.0))).item() == 0.5
    assert leaky_relu(Tensor(np.array(-1.0))).item() == pytest.approx(-0.2)
    assert hard_sigmoid(Tensor(np.array(10.0))).item() == 1.0
    assert hard_sigmoid(Tensor(np.array(-10.0))).item() == 0.0
    assert elu(Tensor(np.array(-1.0))).item() == pytest.approx(np.exp(-1) - 1)


def test_hard_sigmoid_plateau_boundary_slope():
    x = Tensor(np.array([-2.5, 2.5, 3.0]), requires_grad=True)
    hard_sigmoid(x).backward(np.ones(3))
    assert x.grad.tolist() == [0.2, 0.2, 0.0]


# --- gradient checks -----------------------------------------------------


def _away_from_kinks(x, kinks, margin=1e-3):
    for k in kinks:
        close = np.abs(x - k) < margin
        x = np.where(close, x + 2 * margin * np.sign(x - k + 1e-12), x)
    return x


@pytest.mark.parametrize("seed", SEEDS)
@pytest.mark.parametrize(
    "name, fn, kinks",
    [
        ("elu", elu, [0.0]),
        ("leaky_relu", leaky_relu, [0.0]),
        ("hard_sigmoid", hard_sigmoid, [-2.5, 2.5]),
        ("abs", tabs, [0.0]),
        ("maxpool", maxpool2x2, []),
        ("upsample", upsample2x2, []),
        ("mean", lambda t: tmean(t, axis=(2, 3)), []),
    ],
)
def test_unary_gradients(seed, name, fn, kinks):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-4, 4, (2, 2, 4, 4))
    x = _away_from_kinks(x, kinks)
    weights = np.random.default_rng(seed + 100)
    out_w = {}

    def f(t):
        out = fn(t)
        if "w" not in out_w:
            out_w["w"] = Tensor(weights.standard_normal(out.shape))
        return tsum(out * out_w["w"])

    report = grad_check(f, x)
    assert report.passed(1e-3), (name, report)


@pytest.mark.parametrize("seed", SEEDS)
@pytest.mark.parametrize("dilation, stride", [(0, 1), (2, 1), (5, 1), (0, 2)])
def test_conv_gradients(seed, dilation, stride):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((2, 2, 6, 6))
    w = Tensor(rng.standard_normal((3, 2, 5, 5)), requires_grad=True)
    b = Tensor(rng.standard_normal(3), requires_grad=True)
    out_shape = conv2d(Tensor(x), w, b, dilation, stride).shape
    proj = Tensor(rng.standard_normal(out_shape))

    def f(t):
        return tsum(conv2d(t, w, b, dilation, stride) * proj)

    assert grad_check(f, x).passed()
    assert grad_check(f, x, wrt=w).passed()
    assert grad_check(f, x, wrt=b).passed()


@pytest.mark.parametrize("seed", SEEDS)
@pytest.mark.parametrize("dilation", [0, 2, 5])
def test_tconv_gradients(seed, dilation):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((2, 2, 6, 6))
    w = Tensor(rng.standard_normal((2, 3, 5, 5)), requires_grad=True)
    b = Tensor(rng.standard_normal(3), requires_grad=True)
    proj = Tensor(rng.standard_normal((2, 3, 6, 6)))

    def f(t):
        return tsum(tconv2d(t, w, b, dilation) * proj)

    assert grad_check(f, x).passed()
    assert grad_check(f, x, wrt=w).passed()
    assert grad_check(f, x, wrt=b).passed()


@pytest.mark.parametrize("seed", SEEDS)
def test_arithmetic_and_concat_gradients(seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((2, 3, 4, 4))
    other = Tensor(rng.standard_normal((2, 1, 4, 4)))
    proj = Tensor(rng.standard_normal((2, 4, 4, 4)))

    def f(t):
        mixed = t * other + (1.0 - t) * 0.5 - t * t
        return tsum(concat([mixed, other], axis=1) * proj)

    assert grad_check(f, x).passed()


def test_linear_graph_is_exact():
    report = grad_check(lambda t: tsum(t * 3.0), np.random.default_rng(0).standard_normal((1, 1, 3, 3)))
    assert report.max_rel_error <= 1e-10
    assert report.excluded == []


def test_grad_check_rejects_vector_output():
    with pytest.raises(ValueError):
        grad_check(lambda t: t * 2.0, np.ones((1, 1, 2, 2)))


def test_shared_subexpression_accumulates():
    x = Tensor(np.array([2.0, -1.0]), requires_grad=True)
    y = x * x
    tsum(y + y * x).backward()
    np.testing.assert_allclose(x.grad, 2 * x.data + 3 * x.data**2)


def test_topological_order_inputs_first():
    a = Tensor(np.ones(2), requires_grad=True)
    b = a * 2.0
    c = b + a
    d = tsum(c * b)
    order = topological_order(d)
    pos = {id(n): i for i, n in enumerate(order)}
    for node in order:
        for p in node.parents:
            assert pos[id(p)] < pos[id(node)]
    assert order[-1] is d


@pytest.mark.parametrize("seed", SEEDS)
@pytest.mark.parametrize("fn, kinks", [(elu, [0.0]), (leaky_relu, [0.0]), (hard_sigmoid, [-2.5, 2.5])])
def test_activation_gradients_tight(seed, fn, kinks):
    x = _away_from_kinks(np.random.default_rng(seed).uniform(-4, 4, (1, 1, 3, 3)), kinks)
    proj = Tensor(np.random.default_rng(seed + 50).standard_normal((1, 1, 3, 3)))
    report = grad_check(lambda t: tsum(fn(t) * proj), x)
    assert report.max_rel_error <= 1e-5


@pytest.mark.parametrize("seed", SEEDS)
def test_matmul_and_reshape_gradients(seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((2, 3, 2, 2))
    w = Tensor(rng.standard_normal((12, 4)), requires_grad=True)

    def f(t):
        return tsum(tabs(matmul(reshape(t, (2, 12)), w)) * 0.5)

    assert grad_check(f, x).passed()
    assert grad_check(f, x, wrt=w).passed()


@pytest.mark.parametrize("seed", SEEDS)
def test_cblock_gradient(seed):
    """Three dilated branches, ELU, concatenation and pooling chained like an encoder block."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((1, 2, 8, 8))
    ws = [Tensor(rng.standard_normal((1, 2, 5, 5)) * 0.3, requires_grad=True) for _ in range(3)]

    def f(t):
        branches = [elu(conv2d(t, w, None, d)) for w, d in zip(ws, (0, 2, 5))]
        return tsum(maxpool2x2(concat(branches, axis=1)))

    assert grad_check(f, x).passed(1e-3)
    assert grad_check(f, x, wrt=ws[2]).passed(1e-3)


def test_no_grad_records_nothing():
    a = Tensor(np.ones(3), requires_grad=True)
    with no_grad():
        b = a * 2.0
    assert b.parents == () or not b.parents
    assert not b.requires_grad
