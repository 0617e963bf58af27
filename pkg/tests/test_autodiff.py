import math

import numpy as np
import pytest

from conftest import central_diff
from varbridge import autodiff as ad
from varbridge.errors import DomainError, InvalidArgumentError, NumericalError


def scalar_grad(fn, x0):
    tape = ad.Tape()
    x = tape.param(x0)
    (g,) = ad.grad(fn(x), [x])
    return g


def fd_check(build, x0, rtol=1e-6, atol=1e-9, h=1e-5):
    """Compare the tape gradient of ``build(Tensor) -> scalar`` with central differences."""
    x0 = np.asarray(x0, dtype=float)
    g = scalar_grad(build, x0)

    def value(x):
        return float(build(ad.Tape().param(x)).value)

    np.testing.assert_allclose(g, central_diff(value, x0, h), rtol=rtol, atol=atol)


class TestPrimitives:
    def test_square_derivative(self):
        assert float(scalar_grad(ad.square, 3.0)) == 6.0

    def test_softplus_derivative_at_zero(self):
        assert float(scalar_grad(ad.softplus, 0.0)) == 0.5

    def test_softplus_large_input(self):
        out = ad.softplus(ad.Tape().param(50.0)).value
        assert np.isfinite(out)
        assert float(out) == pytest.approx(50.0 + math.log1p(math.exp(-50)), rel=1e-15)
        assert np.isfinite(ad.softplus(ad.Tape().param(1000.0)).value)

    @pytest.mark.parametrize(
        "fn, x0",
        [
            (lambda x: ad.sum(ad.exp(x)), [0.3, -1.2, 2.0]),
            (lambda x: ad.sum(ad.log(x)), [0.3, 1.2, 2.0]),
            (lambda x: ad.sum(ad.tanh(x)), [0.3, -1.2, 2.0]),
            (lambda x: ad.sum(ad.sigmoid(x)), [0.3, -1.2, 2.0]),
            (lambda x: ad.sum(ad.softplus(x)), [0.3, -1.2, 2.0]),
            (lambda x: ad.sum(ad.sqrt(x)), [0.3, 1.2, 2.0]),
            (lambda x: ad.sum(x / (x + 2.0)), [0.3, 1.2, 2.0]),
            (lambda x: ad.sum(3.0 - x * x), [0.3, 1.2, 2.0]),
            (lambda x: ad.mean(ad.concat([x, ad.square(x)], axis=0)), [0.3, 1.2]),
            (lambda x: ad.sum(ad.stack([x, 2.0 * x], axis=1) * np.array([[1.0, -3.0]])), [0.3, 1.2]),
            (lambda x: ad.sum(x[1:] * x[:-1]), [0.3, 1.2, -0.7]),
            (lambda x: ad.sum(ad.reshape(x, (2, 2)) @ np.array([[1.0], [2.0]])), [0.3, 1.2, -0.7, 0.1]),
            (lambda x: ad.sum(ad.sum(ad.reshape(x, (2, 2)), axis=0) * np.array([2.0, 5.0])), [0.3, 1.2, -0.7, 0.1]),
        ],
    )
    def test_primitive_gradients(self, fn, x0):
        fd_check(fn, x0)

    def test_broadcast_gradients(self, rng):
        b0 = rng.normal(size=3)
        X = rng.normal(size=(4, 3))

        def fn(b):
            return ad.sum(ad.tanh(X * b + b))

        fd_check(fn, b0)

    def test_shape_mismatch(self):
        tape = ad.Tape()
        a, b = tape.param(np.ones(3)), tape.param(np.ones(4))
        with pytest.raises(InvalidArgumentError):
            ad.add(a, b)
        with pytest.raises(InvalidArgumentError):
            ad.matmul(tape.param(np.ones((2, 3))), tape.param(np.ones((2, 3))))

    def test_mixed_tapes_rejected(self):
        with pytest.raises(InvalidArgumentError):
            ad.Tape().param(1.0) + ad.Tape().param(2.0)

    def test_domain_errors(self):
        with pytest.raises(DomainError):
            ad.log(ad.Tape().param(-1.0))

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_debug_mode_catches_nan(self):
        tape = ad.Tape(debug=True)
        x = tape.param(np.array([0.0]))
        with pytest.raises(NumericalError):
            x / x

    def test_tape_topological(self):
        tape = ad.Tape()
        x = tape.param(np.ones(2))
        y = ad.exp(x) * x + x
        ad.sum(y)
        for i, parents in enumerate(tape.parents):
            assert all(p is None or p < i for p in parents)


class TestGaussianLogPdf:
    def test_standard_value(self):
        tape = ad.Tape()
        out = ad.gaussian_log_pdf(tape.param(np.zeros(3)), np.zeros(3), np.ones(3))
        assert float(out.value) == pytest.approx(-1.5 * math.log(2 * math.pi), abs=1e-15)
        assert -0.5 * math.log(2 * math.pi) == pytest.approx(-0.91894, abs=1e-5)

    def test_mean_gradient(self):
        tape = ad.Tape()
        mu = tape.param(0.0)
        (g,) = ad.grad(ad.gaussian_log_pdf(1.0, mu, 2.0), [mu])
        assert float(g) == pytest.approx(0.5, abs=1e-15)

    def test_fd_all_arguments(self, rng):
        x, mu, v = rng.normal(size=10), rng.normal(size=10), rng.uniform(0.5, 2, 10)
        theta0 = np.concatenate([x, mu, np.log(v)])

        def fn(t):
            return ad.gaussian_log_pdf(t[0:10], t[10:20], ad.exp(t[20:30]))

        fd_check(fn, theta0, rtol=1e-6)

    def test_axis_reduction(self, rng):
        X = rng.normal(size=(4, 5))
        tape = ad.Tape()
        out = ad.gaussian_log_pdf(tape.param(X), 0.0, 2.0, axis=1)
        assert out.shape == (4,)
        np.testing.assert_allclose(
            out.value, (-0.5 * np.log(2 * np.pi * 2.0) - X**2 / 4.0).sum(axis=1), atol=1e-14
        )

    def test_nonpositive_variance(self):
        with pytest.raises(DomainError):
            ad.gaussian_log_pdf(ad.Tape().param(1.0), 0.0, 0.0)


class TestBackward:
    def test_sum_gives_ones(self):
        tape = ad.Tape()
        p = tape.param(np.arange(5.0))
        (g,) = ad.grad(ad.sum(p), [p])
        np.testing.assert_array_equal(g, np.ones(5))

    def test_non_scalar_rejected(self):
        tape = ad.Tape()
        with pytest.raises(InvalidArgumentError):
            ad.backward(tape.param(np.ones(2)) * 2.0)

    def test_matmul_tanh_chain(self, rng):
        A0 = rng.normal(size=(4, 4))
        B = rng.normal(size=(4, 4))
        C = rng.normal(size=(4, 4))

        def fn(a):
            A = ad.reshape(a, (4, 4))
            return ad.sum(ad.tanh(ad.tanh(A @ B) @ A) * C)

        fd_check(fn, A0.ravel(), rtol=1e-5, atol=1e-8)

    def test_rebuilt_tapes_agree_bitwise(self, rng):
        W0 = rng.normal(size=(3, 3))

        def run():
            tape = ad.Tape()
            W = tape.param(W0)
            return ad.grad(ad.sum(ad.softplus(W @ W) * W), [W])[0]

        np.testing.assert_array_equal(run(), run())

    def test_linearity(self, rng):
        x0 = rng.normal(size=6)
        a, b = 2.5, -0.75

        def f(x):
            return ad.sum(ad.tanh(x) * x)

        def g(x):
            return ad.sum(ad.exp(x * 0.3))

        ga = scalar_grad(f, x0)
        gb = scalar_grad(g, x0)
        gc = scalar_grad(lambda x: a * f(x) + b * g(x), x0)
        np.testing.assert_allclose(gc, a * ga + b * gb, rtol=1e-13, atol=1e-14)

    def test_unreachable_parameter_has_zero_grad(self):
        tape = ad.Tape()
        x, y = tape.param(1.0), tape.param(2.0)
        gx, gy = ad.grad(ad.square(x), [x, y])
        assert float(gx) == 2.0 and float(gy) == 0.0
