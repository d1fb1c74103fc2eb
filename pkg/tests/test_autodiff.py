"""Tape, primitives, and gradient checks against central finite differences."""

import math

import numpy as np
import pytest

from hetsmax.autodiff import (
    NonFiniteError,
    ShapeError,
    Tape,
    Tensor,
    add,
    apply_primitive,
    backward,
    exp,
    finite_difference_gradient,
    index_select,
    leaky_relu,
    log,
    matmul,
    mean_reduce,
    mul,
    scale,
    softplus,
    tempered_softmax,
)

RNG = np.random.default_rng(20260810)


def _rel_err(a, b):
    denom = max(np.linalg.norm(b), 1e-12)
    return np.linalg.norm(a - b) / denom


class TestPrimitiveForward:
    def test_matmul_identity(self):
        a = RNG.normal(size=(3, 4))
        out = apply_primitive("matmul", Tensor(np.eye(3)), Tensor(a))
        np.testing.assert_array_equal(out.data, a)

    def test_matmul_shape_errors(self):
        with pytest.raises(ShapeError):
            matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
        with pytest.raises(ShapeError):
            matmul(Tensor(np.ones(3)), Tensor(np.ones((3, 2))))

    def test_softplus_at_zero(self):
        out = apply_primitive("softplus", Tensor(np.zeros(1)))
        assert out.data[0] == pytest.approx(math.log(2.0), abs=1e-15)

    def test_leaky_relu_slope(self):
        out = apply_primitive("leaky-relu", Tensor([-1.0, 2.0]), slope=0.01)
        np.testing.assert_allclose(out.data, [-0.01, 2.0])

    def test_add_leading_broadcast(self):
        a = RNG.normal(size=(5, 2, 3))
        b = RNG.normal(size=(2, 3))
        out = add(Tensor(a), Tensor(b))
        np.testing.assert_array_equal(out.data, a + b)

    def test_size_one_broadcast_rejected(self):
        with pytest.raises(ShapeError):
            add(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 1))))
        with pytest.raises(ShapeError):
            mul(Tensor(np.ones((4, 1))), Tensor(np.ones((4, 3))))

    def test_non_finite_surfaces(self):
        with pytest.raises(NonFiniteError):
            exp(Tensor(np.array([1000.0])))
        with pytest.raises(NonFiniteError):
            log(Tensor(np.array([0.0])))
        with pytest.raises(NonFiniteError):
            Tensor(np.array([np.nan]))

    def test_index_select_rows(self):
        x = RNG.normal(size=(4, 3))
        idx = np.array([0, 2, 1, 2])
        out = index_select(Tensor(x), idx)
        np.testing.assert_array_equal(out.data, x[np.arange(4), idx])
        with pytest.raises(IndexError):
            index_select(Tensor(x), np.array([0, 0, 0, 3]))

    def test_unknown_primitive(self):
        with pytest.raises(KeyError):
            apply_primitive("convolve", Tensor(np.ones(2)))


class TestTemperedSoftmax:
    def test_symmetry(self):
        for tau in (0.1, 1.0, 7.5):
            out = tempered_softmax(Tensor([2.5, 2.5]), tau)
            np.testing.assert_allclose(out.data, [0.5, 0.5], atol=1e-15)

    def test_hand_value(self):
        out = tempered_softmax(Tensor([1.0, 0.0, 0.0]), 1.0)
        np.testing.assert_allclose(out.data, [0.57612, 0.21194, 0.21194], atol=5e-6)

    def test_zero_temperature_limit(self):
        out = tempered_softmax(Tensor([1.0, 0.0, 0.0]), 0.01)
        assert out.data[0] >= 1.0 - 1e-40
        assert np.argmax(out.data) == 0

    def test_rows_sum_to_one_and_argmax_preserved(self):
        for _ in range(50):
            z = RNG.normal(size=8) * 3
            tau = float(RNG.uniform(0.05, 20.0))
            p = tempered_softmax(Tensor(z), tau).data
            assert abs(p.sum() - 1.0) <= 1e-12
            assert np.argmax(p) == np.argmax(z)

    def test_invalid_temperature(self):
        with pytest.raises(ValueError):
            tempered_softmax(Tensor([1.0, 2.0]), 0.0)
        with pytest.raises(ValueError):
            tempered_softmax(Tensor([1.0, 2.0]), -1.0)


class TestBackward:
    def test_mean_square_grad(self):
        x = Tensor([1.0, 2.0])
        with Tape() as tape:
            loss = mean_reduce(mul(x, x))
        g = tape.gradients(loss)[x.node_id]
        np.testing.assert_allclose(g.data, [1.0, 2.0], atol=1e-15)

    def test_log_softplus_chain(self):
        w = Tensor(np.zeros(()))
        with Tape() as tape:
            loss = log(softplus(w))
        g = tape.gradients(loss)[w.node_id]
        assert float(g.data) == pytest.approx(0.5 / math.log(2.0), abs=1e-12)

    def test_backward_requires_scalar(self):
        x = Tensor([1.0, 2.0])
        with Tape() as tape:
            y = mul(x, x)
            with pytest.raises(ShapeError):
                tape.gradients(y)

    def test_detached_node_lookup_fails(self):
        x = Tensor([1.0, 2.0])
        other = Tensor([5.0])
        with Tape() as tape:
            loss = mean_reduce(mul(x, x))
        grads = tape.gradients(loss)
        with pytest.raises(KeyError):
            grads[other.node_id]

    def test_active_tape_backward(self):
        x = Tensor([3.0])
        with Tape():
            loss = mean_reduce(mul(x, x))
            g = backward(loss)
        assert g[x.node_id].data[0] == pytest.approx(6.0)

    def test_gradient_accumulation_two_consumers(self):
        # f(x) = mean(x*x) + 2*mean(x); expanded by hand: grad = 2x/n + 2/n
        x = Tensor(RNG.normal(size=4))
        with Tape() as tape:
            loss = add(mean_reduce(mul(x, x)), scale(mean_reduce(x), 2.0))
        g = tape.gradients(loss)[x.node_id].data
        np.testing.assert_allclose(g, 2.0 * x.data / 4 + 2.0 / 4, atol=1e-14)

    def test_deterministic_for_fixed_tape(self):
        x = Tensor(RNG.normal(size=6))
        with Tape() as tape:
            loss = mean_reduce(exp(scale(x, 0.3)))
        g1 = tape.gradients(loss)[x.node_id].data
        g2 = tape.gradients(loss)[x.node_id].data
        np.testing.assert_array_equal(g1, g2)


class TestFiniteDifferenceOracle:
    def test_quadratic_exact(self):
        g = finite_difference_gradient(lambda v: float(v[0] ** 2), np.array([3.0]))
        assert g.data[0] == pytest.approx(6.0, abs=1e-8)

    def test_sine(self):
        g = finite_difference_gradient(lambda v: math.sin(v[0]), np.array([0.0]))
        assert g.data[0] == pytest.approx(1.0, abs=1e-9)

    def test_constant(self):
        g = finite_difference_gradient(lambda v: 1.25, RNG.normal(size=5))
        np.testing.assert_array_equal(g.data, np.zeros(5))

    def test_nonfinite_rejected(self):
        with pytest.raises(NonFiniteError):
            finite_difference_gradient(lambda v: float("nan"), np.array([1.0]))

    def test_bad_step(self):
        with pytest.raises(ValueError):
            finite_difference_gradient(lambda v: 0.0, np.array([1.0]), h=0.0)


def _check_grad(build, point, h=1e-5, tol=1e-4):
    """Reverse-mode vs central differences at one parameter point."""
    x = Tensor(point)
    with Tape() as tape:
        loss = build(x)
    auto = tape.gradients(loss)[x.node_id].data

    def f(v):
        return build(Tensor(v)).item()

    fd = finite_difference_gradient(f, point, h).data
    assert _rel_err(auto, fd) < tol


class TestGradientsMatchFiniteDifferences:
    """Every primitive, >= 20 random points each."""

    @pytest.mark.parametrize("case", [
        "matmul", "add", "mul", "scale", "exp", "log", "softplus",
        "leaky_relu", "mean_all", "mean_axis", "index_select", "softmax",
    ])
    def test_primitive(self, case):
        rng = np.random.default_rng(hash(case) % 2 ** 32)
        other = Tensor(rng.normal(size=(3, 2)))
        bias = Tensor(rng.normal(size=2))
        idx = np.array([1, 0, 1, 0])
        builders = {
            "matmul": (lambda x: mean_reduce(mul(y := matmul(x, other), y)), (4, 3)),
            "add": (lambda x: mean_reduce(mul(y := add(x, bias), y)), (4, 2)),
            "mul": (lambda x: mean_reduce(mul(x, add(x, bias))), (4, 2)),
            "scale": (lambda x: mean_reduce(mul(y := scale(x, -1.7), y)), (5,)),
            "exp": (lambda x: mean_reduce(exp(scale(x, 0.5))), (5,)),
            "log": (lambda x: mean_reduce(log(add(mul(x, x), Tensor(np.full((), 0.5))))), (5,)),
            "softplus": (lambda x: mean_reduce(mul(y := softplus(x), y)), (5,)),
            "leaky_relu": (lambda x: mean_reduce(mul(y := leaky_relu(x, 0.01), y)), (5,)),
            "mean_all": (lambda x: mean_reduce(mul(x, x)), (3, 4)),
            "mean_axis": (lambda x: mean_reduce(mul(y := mean_reduce(x, axis=0), y)), (3, 4)),
            "index_select": (lambda x: mean_reduce(mul(y := index_select(x, idx), y)), (4, 2)),
            "softmax": (lambda x: mean_reduce(log(tempered_softmax(x, 0.7))), (4, 3)),
        }
        build, shape = builders[case]
        for _ in range(20):
            point = rng.normal(size=shape)
            if case == "leaky_relu":
                # keep clear of the kink where FD is one-sided
                point = np.where(np.abs(point) < 0.05, 0.1, point)
            _check_grad(build, point)
