"""Checks for the reverse-mode array math layer.

Oracles here are deliberately primitive: loop-based linear algebra, hand
derivations, and constants frozen from a 60-digit arbitrary-precision
computation (mpmath). The layer under test must agree with them, not the
other way round.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctxpool import numerics as nm
from ctxpool.errors import (
    DegenerateInputError,
    DimensionError,
    GraphError,
    NonFiniteError,
    ParameterError,
)

# ---------------------------------------------------------------------------
# oracles


def matmul_oracle(a, b):
    """Triple-loop 2-d matrix product."""
    n, k = a.shape
    k2, m = b.shape
    assert k == k2
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for t in range(k):
                acc += a[i, t] * b[t, j]
            out[i, j] = acc
    return out


# softmax([1, 0]) at temperature 0.067, frozen from a 60-digit computation
SOFTMAX_2_T0067 = np.array([0.9999996703958552610141735, 3.296041447389858265009449e-7])

# softmax([0.3, -0.1, 0.2]) at temperature 0.1, same provenance
SOFTMAX_3_T01 = np.array(
    [0.7213991842739686542709703, 0.01321288695378941539525661, 0.2653879287722419303337731]
)

# log(e^1 + e^2 + e^3), same provenance
LSE_123 = 3.40760596444438030448292


# ---------------------------------------------------------------------------
# forward values


def test_matmul_identity_examples():
    eye = np.eye(2)
    m = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(nm.matmul(eye, m), m)
    np.testing.assert_array_equal(
        nm.matmul(np.array([[1.0, 0.0]]), np.array([[5.0], [7.0]])),
        np.array([[5.0]]),
    )


def test_matmul_matches_loop_oracle():
    rng = np.random.default_rng(7)
    for _ in range(5):
        a = rng.standard_normal((4, 6))
        b = rng.standard_normal((6, 3))
        np.testing.assert_allclose(nm.matmul(a, b), matmul_oracle(a, b), atol=1e-12)


def test_matmul_batch_broadcast_matches_per_slice_oracle():
    rng = np.random.default_rng(8)
    x = rng.standard_normal((5, 4))
    w = rng.standard_normal((3, 4, 2))
    out = nm.matmul(x, w)
    assert out.shape == (3, 5, 2)
    for h in range(3):
        np.testing.assert_allclose(out[h], matmul_oracle(x, w[h]), atol=1e-12)


def test_matmul_shape_errors():
    with pytest.raises(DimensionError):
        nm.matmul(np.ones(3), np.ones((3, 2)))
    with pytest.raises(DimensionError):
        nm.matmul(np.ones((2, 3)), np.ones((4, 2)))


def test_softmax_matches_frozen_high_precision_values():
    np.testing.assert_allclose(
        nm.softmax(np.array([1.0, 0.0]), temperature=0.067),
        SOFTMAX_2_T0067,
        rtol=1e-12,
        atol=1e-18,
    )
    np.testing.assert_allclose(
        nm.softmax(np.array([0.3, -0.1, 0.2]), temperature=0.1),
        SOFTMAX_3_T01,
        rtol=1e-12,
        atol=1e-18,
    )


def test_softmax_temperature_extremes():
    x = np.array([0.9, 0.1, 0.5, 0.89])
    sharp = nm.softmax(x, temperature=1e-4)
    assert sharp[0] >= 0.999
    flat = nm.softmax(x, temperature=1e4)
    assert np.max(np.abs(flat - 0.25)) < 1e-3


def test_softmax_invalid_temperature():
    for bad in (0.0, -1.0, float("nan")):
        with pytest.raises(ParameterError):
            nm.softmax(np.array([1.0, 2.0]), temperature=bad)


@settings(max_examples=50, deadline=None)
@given(
    st.lists(
        st.floats(min_value=-50, max_value=50, allow_nan=False, width=64),
        min_size=1,
        max_size=8,
    )
)
def test_softmax_simplex_property(xs):
    out = nm.softmax(np.array(xs), temperature=0.1)
    assert np.all(out >= 0)
    assert abs(float(np.sum(out)) - 1.0) < 1e-12


def test_median_even_count_is_midpoint():
    assert float(nm.median(np.array([4.0, 1.0, 3.0, 2.0]), axis=0)) == 2.5
    assert float(nm.median(np.array([1.0, 2.0, 3.0]), axis=0)) == 2.0


def test_sorted_sum_is_bitwise_permutation_invariant():
    rng = np.random.default_rng(11)
    x = rng.standard_normal((7, 4)) * rng.uniform(0.1, 100, size=(7, 4))
    base = nm.sorted_sum(x, axis=0)
    for seed in range(5):
        perm = np.random.default_rng(seed).permutation(7)
        again = nm.sorted_sum(x[perm], axis=0)
        assert np.array_equal(base, again)


@settings(max_examples=50, deadline=None)
@given(
    st.lists(
        st.floats(min_value=-1e6, max_value=1e6, allow_nan=False, width=64),
        min_size=1,
        max_size=6,
    )
)
def test_sorted_sum_reverse_permutation_property(xs):
    x = np.array(xs)
    assert float(nm.sorted_sum(x, axis=0)) == float(nm.sorted_sum(x[::-1], axis=0))


# ---------------------------------------------------------------------------
# gradients against hand derivations


def grads_of(f, params):
    leaves = {k: nm.Node(nm.as_tensor(v)) for k, v in params.items()}
    root = f(leaves)
    nm.backward(root)
    return root, {k: leaves[k].grad for k in params}


def test_grad_sum_of_squares():
    x = np.array([1.0, -2.0, 3.0])
    _, grads = grads_of(lambda p: nm.reduce_sum(nm.mul(p["x"], p["x"])), {"x": x})
    np.testing.assert_allclose(grads["x"], 2 * x, atol=1e-14)


def test_grad_fanout_accumulates():
    # y = x + x, f = sum(y * y)  =>  df/dx = 8x
    x = np.array([0.5, -1.5])

    def f(p):
        y = nm.add(p["x"], p["x"])
        return nm.reduce_sum(nm.mul(y, y))

    _, grads = grads_of(f, {"x": x})
    np.testing.assert_allclose(grads["x"], 8 * x, atol=1e-14)


def test_grad_softmax_component():
    # d softmax([0,0])[0] / dx = (0.25, -0.25)
    def f(p):
        return nm.narrow(nm.softmax(p["x"]), 0, 0, 1)

    _, grads = grads_of(f, {"x": np.zeros(2)})
    np.testing.assert_allclose(grads["x"], [0.25, -0.25], atol=1e-14)


def test_log_sum_exp_value_and_grad():
    x = np.array([1.0, 2.0, 3.0])

    def f(p):
        return nm.log(nm.reduce_sum(nm.exp(p["x"])))

    root, grads = grads_of(f, {"x": x})
    np.testing.assert_allclose(float(root.value), LSE_123, rtol=1e-14)
    # the gradient of log-sum-exp is the softmax of the input
    np.testing.assert_allclose(grads["x"], np.exp(x - LSE_123), rtol=1e-12)


def test_max_min_ties_route_to_lowest_index():
    _, grads = grads_of(
        lambda p: nm.reduce_sum(nm.reduce_max(p["x"], axis=0)),
        {"x": np.array([3.0, 5.0, 5.0])},
    )
    np.testing.assert_array_equal(grads["x"], [0.0, 1.0, 0.0])

    _, grads = grads_of(
        lambda p: nm.reduce_sum(nm.reduce_min(p["x"], axis=0)),
        {"x": np.array([2.0, 2.0, 7.0])},
    )
    np.testing.assert_array_equal(grads["x"], [1.0, 0.0, 0.0])


def test_median_gradient_routing():
    # odd count: the middle order statistic gets the whole gradient
    _, grads = grads_of(
        lambda p: nm.median(p["x"], axis=0), {"x": np.array([3.0, 1.0, 2.0])}
    )
    np.testing.assert_array_equal(grads["x"], [0.0, 0.0, 1.0])

    # even count: the two middle order statistics split it equally
    _, grads = grads_of(
        lambda p: nm.median(p["x"], axis=0), {"x": np.array([4.0, 1.0, 3.0, 2.0])}
    )
    np.testing.assert_array_equal(grads["x"], [0.0, 0.0, 0.5, 0.5])


def test_relu_subgradient_zero_at_kink():
    _, grads = grads_of(
        lambda p: nm.reduce_sum(nm.relu(p["x"])), {"x": np.array([0.0, -1.0, 2.0])}
    )
    np.testing.assert_array_equal(grads["x"], [0.0, 0.0, 1.0])


def test_concat_narrow_gradient_split():
    a = np.array([1.0, 2.0])
    b = np.array([3.0, 4.0, 5.0])

    def f(p):
        joined = nm.concat([p["a"], p["b"]], axis=0)
        # keep only elements 1..3 -> a[1] and b[0], b[1]
        return nm.reduce_sum(nm.mul(nm.narrow(joined, 0, 1, 4), np.array([1.0, 10.0, 100.0])))

    _, grads = grads_of(f, {"a": a, "b": b})
    np.testing.assert_array_equal(grads["a"], [0.0, 1.0])
    np.testing.assert_array_equal(grads["b"], [10.0, 100.0, 0.0])


# ---------------------------------------------------------------------------
# finite-difference agreement on composites


def test_fd_check_composite_chain():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((5, 4))

    def f(p):
        h = nm.relu(nm.add(nm.matmul(x, p["w"]), p["b"]))
        h = nm.add(h, 0.05)  # keep relu inputs away from the kink
        row_stats = nm.concat(
            [
                nm.reduce_max(h, axis=0),
                nm.reduce_min(h, axis=0),
                nm.median(h, axis=0),
                nm.div(nm.sorted_sum(h, axis=0), h.shape[0]),
            ],
            axis=0,
        )
        z = nm.normalize(row_stats, axis=0)
        w = nm.softmax(z, temperature=0.5)
        return nm.log(nm.reduce_sum(nm.mul(nm.exp(w), w)))

    params = {"w": rng.standard_normal((4, 3)) * 0.5, "b": rng.standard_normal(3) * 0.1}
    report = nm.fd_check(f, params, step=1e-6, tolerance=1e-6)
    assert report.passed, str(report)


def test_fd_check_broadcast_bias():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((4, 3))

    def f(p):
        return nm.reduce_sum(nm.mul(nm.add(x, p["b"]), nm.add(x, p["b"])))

    report = nm.fd_check(f, {"b": rng.standard_normal((1, 3))}, tolerance=1e-7)
    assert report.passed, str(report)


def test_fd_check_cosine_similarity():
    rng = np.random.default_rng(5)

    def f(p):
        return nm.cosine_similarity(p["a"], p["b"])

    report = nm.fd_check(
        f, {"a": rng.standard_normal(6), "b": rng.standard_normal(6)}, tolerance=1e-6
    )
    assert report.passed, str(report)


def test_fd_check_flags_wrong_gradient():
    def f(p):
        x = p["x"]
        if isinstance(x, nm.Node):
            value = np.sum(x.value**2)
            # deliberately wrong by a factor of 3
            return nm.Node(value, (x,), lambda g: (3.0 * 2.0 * x.value * g,), "bad")
        return np.sum(x**2)

    report = nm.fd_check(f, {"x": np.array([1.0, 2.0])})
    assert not report.passed


# ---------------------------------------------------------------------------
# graph mechanics and error discipline


def test_traced_and_untraced_forward_agree_bitwise():
    rng = np.random.default_rng(9)
    x = rng.standard_normal((4, 3))
    y = rng.standard_normal((3, 2))
    cases = [
        (nm.add, (x, x)),
        (nm.sub, (x, 2.0)),
        (nm.mul, (x, x)),
        (nm.div, (x, 3.0)),
        (nm.matmul, (x, y)),
        (nm.exp, (x,)),
        (nm.relu, (x,)),
        (nm.softmax, (x,)),
        (nm.normalize, (x,)),
        (nm.reduce_sum, (x,)),
        (nm.sorted_sum, (x, 0)),
        (nm.reduce_max, (x, 0)),
        (nm.reduce_min, (x, 0)),
        (nm.median, (x, 0)),
        (nm.transpose, (x,)),
        (nm.reshape, (x, (12,))),
        (nm.narrow, (x, 0, 1, 3)),
    ]
    for op, args in cases:
        raw = op(*args)
        traced = op(nm.Node(args[0]), *args[1:])
        assert np.array_equal(raw, traced.value), op.__name__


def test_backward_twice_gives_same_gradients():
    x = nm.Node(np.array([1.0, 2.0, 3.0]))
    root = nm.reduce_sum(nm.mul(x, x))
    nm.backward(root)
    first = x.grad.copy()
    nm.backward(root)
    np.testing.assert_array_equal(x.grad, first)


def test_backward_requires_scalar_root():
    x = nm.Node(np.array([1.0, 2.0]))
    with pytest.raises(GraphError):
        nm.backward(nm.mul(x, x))


def test_cycle_detection():
    a = nm.Node(np.array(1.0))
    b = nm.Node(np.array(2.0), (a,), lambda g: (g,), "loop")
    a.parents = (b,)
    a.vjp = lambda g: (g,)
    with pytest.raises(GraphError):
        nm.backward(b)


def test_nonfinite_results_raise():
    with pytest.raises(NonFiniteError):
        nm.div(np.array([1.0]), np.array([0.0]))
    with pytest.raises(NonFiniteError):
        nm.log(np.array([-1.0]))
    with pytest.raises(NonFiniteError):
        nm.log(np.array([0.0]))
    with pytest.raises(NonFiniteError):
        nm.exp(np.array([1000.0]))
    with pytest.raises(NonFiniteError):
        nm.as_tensor([np.nan])
    with pytest.raises(NonFiniteError):
        nm.add(np.array([np.inf]), np.array([1.0]))


def test_degenerate_inputs_raise():
    with pytest.raises(DegenerateInputError):
        nm.normalize(np.zeros(3))
    with pytest.raises(DegenerateInputError):
        nm.cosine_similarity(np.zeros(3), np.ones(3))


def test_cosine_similarity_stays_in_range():
    v = np.array([1.0, 1.0, 1.0])
    assert float(nm.cosine_similarity(v, 2.0 * v)) == 1.0
    assert float(nm.cosine_similarity(v, -v)) == -1.0
    rng = np.random.default_rng(12)
    for _ in range(50):
        a, b = rng.standard_normal((2, 8))
        c = float(nm.cosine_similarity(a, b))
        assert -1.0 <= c <= 1.0


def test_narrow_rejects_bad_ranges():
    x = np.zeros((4, 2))
    with pytest.raises(ParameterError):
        nm.narrow(x, 0, 2, 2)
    with pytest.raises(ParameterError):
        nm.narrow(x, 0, 0, 5)


def test_fd_check_rejects_bad_settings():
    f = lambda p: nm.reduce_sum(p["x"])
    with pytest.raises(ParameterError):
        nm.fd_check(f, {"x": np.ones(2)}, step=0.0)
    with pytest.raises(ParameterError):
        nm.fd_check(f, {"x": np.ones(2)}, tolerance=-1.0)
    with pytest.raises(ParameterError):
        nm.fd_check(f, {})
