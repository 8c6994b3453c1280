import numpy as np
import pytest

from rnmlab.errors import (
    BracketError,
    ConditioningError,
    EvaluationError,
    ParameterError,
)
from rnmlab.numerics import (
    Dual2,
    circle_fft,
    circle_ifft,
    dexp,
    dlog,
    dual_eval,
    find_root,
    hermitian_factor,
    integrate,
    make_polar_quadrature,
    make_radial_quadrature,
)


class TestPolarQuadrature:
    def test_unit_disk_area(self):
        rule = make_polar_quadrature(1.0, 40, 32)
        val = integrate(rule, lambda x, y: np.ones_like(x))
        assert abs(val - np.pi) <= 1e-12 * np.pi

    def test_r2_cos2(self):
        # closed form: int r^2 cos^2(theta) over unit disk = pi/4
        rule = make_polar_quadrature(1.0, 40, 32)
        val = integrate(rule, lambda x, y: x * x)
        assert abs(val - np.pi / 4) <= 1e-12

    def test_gaussian_disk(self):
        rule = make_polar_quadrature(6.0, 200, 16)
        val = integrate(rule, lambda x, y: np.exp(-(x * x + y * y)))
        exact = np.pi * (1.0 - np.exp(-36.0))
        assert abs(val - exact) <= 1e-10 * exact

    def test_invalid_counts(self):
        with pytest.raises(ParameterError):
            make_polar_quadrature(1.0, 3, 32)
        with pytest.raises(ParameterError):
            make_polar_quadrature(-1.0, 40, 32)

    def test_weights_positive(self):
        rule = make_polar_quadrature(2.0, 24, 16, breakpoints=(0.7,))
        assert np.all(rule.weights > 0)

    def test_exactness_mixed_monomials(self):
        # polynomials in (x, y) of moderate degree times trig polynomials
        rule = make_polar_quadrature(1.3, 30, 32)
        R = 1.3
        for p, q in [(1, 1), (2, 3), (4, 2), (3, 5)]:
            # int r^{2p} cos^2(q theta) r dr dtheta = pi R^{2p+2} / (2p+2)
            def fld(x, y, p=p, q=q):
                r = np.hypot(x, y)
                th = np.arctan2(y, x)
                return r ** (2 * p) * np.cos(q * th) ** 2
            exact = np.pi * R ** (2 * p + 2) / (2 * p + 2)
            assert abs(integrate(rule, fld) - exact) <= 1e-10 * exact


class TestIntegrate:
    def test_zero(self):
        rule = make_radial_quadrature(0.0, 1.0, 16)
        assert integrate(rule, lambda r: np.zeros_like(r)) == 0.0

    def test_gaussian_bump_mass(self):
        rule = make_polar_quadrature(8.0, 240, 16)
        s2 = 0.35
        val = integrate(rule, lambda x, y: np.exp(-(x * x + y * y) / (2 * s2)))
        exact = 2 * np.pi * s2
        assert abs(val - exact) <= 1e-10 * exact

    def test_nan_reports_node(self):
        rule = make_radial_quadrature(0.0, 1.0, 16)

        def bad(r):
            out = np.ones_like(r)
            out[3] = np.nan
            return out

        with pytest.raises(EvaluationError) as err:
            integrate(rule, bad)
        assert err.value.details["node"] == 3


class TestDual2:
    def test_polynomial(self):
        d = dual_eval(lambda x, y: x * x + y * y, (1.0, 2.0))
        assert d.val == 5.0
        assert d.gradient == (2.0, 4.0)
        assert d.laplacian == 4.0

    def test_gaussian_at_origin(self):
        d = dual_eval(lambda x, y: dexp(-(x * x + y * y)), (0.0, 0.0))
        assert d.val == 1.0
        assert d.gradient == (0.0, 0.0)
        assert d.laplacian == -4.0

    def test_against_finite_differences(self):
        rng = np.random.default_rng(7)
        h = 1e-5

        def make_expr(c):
            def f(x, y):
                return dexp((x * y) * c[0]) + (x ** 3) * c[1] + \
                    (y ** 2) * c[2] + x * y * c[3]
            return f

        for _ in range(100):
            c = rng.uniform(-1.0, 1.0, size=4)
            x0, y0 = rng.uniform(-1.5, 1.5, size=2)
            f = make_expr(c)
            d = dual_eval(f, (x0, y0))

            def val(x, y):
                return dual_eval(f, (x, y)).val

            fx = (val(x0 + h, y0) - val(x0 - h, y0)) / (2 * h)
            fy = (val(x0, y0 + h) - val(x0, y0 - h)) / (2 * h)
            lap = (val(x0 + h, y0) + val(x0 - h, y0) + val(x0, y0 + h)
                   + val(x0, y0 - h) - 4 * val(x0, y0)) / h ** 2
            scale = max(1.0, abs(d.dx), abs(d.dy))
            assert abs(fx - d.dx) <= 1e-6 * scale
            assert abs(fy - d.dy) <= 1e-6 * scale
            assert abs(lap - d.laplacian) <= 1e-4 * max(1.0, abs(d.laplacian))

    def test_division_and_log(self):
        d = dual_eval(lambda x, y: dlog(x / y), (2.0, 0.5))
        assert abs(d.val - np.log(4.0)) < 1e-14
        # d/dx log(x/y) = 1/x ; d/dy = -1/y
        assert abs(d.dx - 0.5) < 1e-14
        assert abs(d.dy + 2.0) < 1e-14

    def test_array_components(self):
        x = np.array([0.5, 1.0, 2.0])
        y = np.array([0.0, 1.0, -1.0])
        X, Y = Dual2.seed(x, y)
        d = (X * X) * (Y + 3.0)
        assert np.allclose(d.val, x * x * (y + 3.0))
        assert np.allclose(d.dx, 2 * x * (y + 3.0))
        assert np.allclose(d.dy, x * x)


class TestCircleFFT:
    def test_cosine(self):
        th = 2 * np.pi * np.arange(16) / 16
        ks, c = circle_fft(np.cos(th).astype(complex))
        c1 = c[ks == 1][0]
        cm1 = c[ks == -1][0]
        assert abs(c1 - 0.5) <= 1e-12
        assert abs(cm1 - 0.5) <= 1e-12
        others = c[(ks != 1) & (ks != -1)]
        assert np.max(np.abs(others)) <= 1e-12

    def test_constant(self):
        ks, c = circle_fft(np.ones(8, dtype=complex))
        assert abs(c[ks == 0][0] - 1.0) <= 1e-14
        assert np.max(np.abs(c[ks != 0])) <= 1e-14

    def test_round_trip(self):
        rng = np.random.default_rng(3)
        s = rng.standard_normal(64) + 1j * rng.standard_normal(64)
        _, c = circle_fft(s)
        back = circle_ifft(c)
        assert np.max(np.abs(back - s)) <= 1e-12

    def test_parseval(self):
        rng = np.random.default_rng(4)
        s = rng.standard_normal(32) + 1j * rng.standard_normal(32)
        _, c = circle_fft(s)
        lhs = np.sum(np.abs(s) ** 2) / 32
        rhs = np.sum(np.abs(c) ** 2)
        assert abs(lhs - rhs) <= 1e-12 * max(1.0, lhs)

    def test_bad_length(self):
        with pytest.raises(ParameterError):
            circle_fft(np.ones(12, dtype=complex))
        with pytest.raises(ParameterError):
            circle_fft(np.ones(4, dtype=complex))


class TestHermitianFactor:
    def test_identity(self):
        F = hermitian_factor(np.eye(4))
        assert np.allclose(F, np.eye(4))

    def test_2x2(self):
        G = np.array([[2.0, 1.0], [1.0, 2.0]])
        F = hermitian_factor(G)
        assert np.max(np.abs(F @ F.conj().T - G)) <= 1e-12

    def test_complex(self):
        G = np.array([[2.0, 0.3 + 0.4j], [0.3 - 0.4j, 1.0]])
        F = hermitian_factor(G)
        assert np.max(np.abs(F @ F.conj().T - G)) <= 1e-12

    def test_singular(self):
        G = np.array([[1.0, 1.0], [1.0, 1.0]])
        with pytest.raises(ConditioningError) as err:
            hermitian_factor(G)
        assert err.value.details["pivot"] == 1

    def test_not_hermitian(self):
        with pytest.raises(ParameterError):
            hermitian_factor(np.array([[1.0, 2.0], [0.0, 1.0]]))


class TestFindRoot:
    def test_linear(self):
        assert find_root(lambda x: x - 1.0, 0.0, 2.0) == pytest.approx(1.0, abs=1e-12)

    def test_sqrt2(self):
        x = find_root(lambda x: x * x - 2.0, 1.0, 2.0)
        assert abs(x - np.sqrt(2.0)) <= 1e-10

    def test_no_sign_change(self):
        with pytest.raises(BracketError):
            find_root(lambda x: x * x + 1.0, 0.0, 1.0)

    def test_deterministic(self):
        g = lambda x: np.cos(x) - x
        assert find_root(g, 0.0, 1.0) == find_root(g, 0.0, 1.0)
