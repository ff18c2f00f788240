import numpy as np
import pytest
from numpy.testing import assert_allclose

from adtcert import kfun
from adtcert.errors import DomainError, QuadratureError, RangeError


class TestEvaluation:
    def test_power_law_at_zero(self):
        assert kfun.power_law(1.0, 2.0)(0.0) == 0.0

    def test_linear(self):
        assert kfun.linear(0.5)(4.0) == 2.0

    def test_square_root_law(self):
        assert_allclose(kfun.power_law(2.0, 0.5)(9.0), 6.0)

    def test_vectorized(self):
        out = kfun.power_law(1.0, 2.0)(np.array([1.0, 2.0, 3.0]))
        assert_allclose(out, [1.0, 4.0, 9.0])

    def test_negative_argument_rejected(self):
        with pytest.raises(DomainError):
            kfun.linear(1.0)(-1.0)

    def test_nonpositive_coefficient_rejected(self):
        with pytest.raises(DomainError):
            kfun.linear(0.0)


class TestInverse:
    def test_power_law(self):
        assert_allclose(kfun.power_law(1.0, 2.0).inverse(9.0), 3.0)

    def test_zero(self):
        assert kfun.power_law(3.0, 1.5).inverse(0.0) == 0.0

    def test_linear(self):
        assert kfun.linear(2.0).inverse(5.0) == 2.5

    def test_bisection_matches_forward(self, rng):
        f = kfun.fsum(kfun.linear(1.0), kfun.power_law(0.5, 3.0))
        r = rng.uniform(0.0, 100.0, size=20)
        s = f.inverse(r)
        assert_allclose(f(s), r, rtol=1e-9, atol=1e-9)

    def test_small_targets_stop_on_the_absolute_tolerance(self, monkeypatch):
        calls = []
        original = kfun.Linear._eval

        def counting(self, s):
            calls.append(s)
            return original(self, s)

        monkeypatch.setattr(kfun, 'INVERSION_RTOL', 0.0)
        monkeypatch.setattr(kfun.Linear, '_eval', counting)
        f = kfun.fsum(kfun.linear(1.0), kfun.power_law(0.5, 3.0))
        s = f.inverse(1e-3)
        assert abs(s - 1e-3) < 1e-9
        assert len(calls) < kfun.INVERSION_MAX_ITER / 2

    def test_constant_not_invertible(self):
        with pytest.raises(RangeError):
            kfun.Constant(2.0).inverse(1.0)

    def test_bounded_range(self):
        bounded = kfun.Tabulated((0.0, 1.0), (0.0, 1.0))
        with pytest.raises(RangeError):
            bounded.inverse(2.0)


class TestAlgebra:
    def test_compose_power_laws_closed(self):
        f = kfun.compose(kfun.power_law(2.0, 2.0), kfun.linear(3.0))
        assert isinstance(f, kfun.PowerLaw)
        assert_allclose(f(1.0), 18.0)

    def test_inverse_of_power_law_closed(self):
        f = kfun.power_law(4.0, 2.0)
        g = kfun.inverse(f)
        assert_allclose(g(f(1.7)), 1.7)

    def test_pointwise_min_merges_equal_exponents(self):
        f = kfun.pointwise_min(kfun.linear(2.0), kfun.linear(3.0))
        assert isinstance(f, kfun.Linear)
        assert f.a == 2.0

    def test_min_and_max(self):
        lo = kfun.pointwise_min(kfun.linear(1.0), kfun.power_law(1.0, 2.0))
        hi = kfun.pointwise_max(kfun.linear(1.0), kfun.power_law(1.0, 2.0))
        assert_allclose(lo([0.5, 2.0]), [0.25, 2.0])
        assert_allclose(hi([0.5, 2.0]), [0.5, 4.0])

    def test_zero_drops_out_of_sum(self):
        f = kfun.fsum(kfun.linear(1.0), kfun.Zero())
        assert isinstance(f, kfun.Linear)

    def test_ratio_of_power_laws(self):
        f = kfun.ratio(kfun.power_law(1.0, 2.0), kfun.linear(1.0))
        assert isinstance(f, kfun.Linear)
        assert_allclose(f(0.1), 0.1)


class TestMajorant:
    def test_constant(self):
        g = kfun.nondecreasing_majorant(kfun.Constant(0.5), 4.0)
        assert isinstance(g, kfun.Constant)
        assert g.c == 2.0

    def test_nondecreasing_input(self):
        f = kfun.power_law(1.0, 2.0)
        g = kfun.nondecreasing_majorant(f, 4.0)
        grid = np.logspace(-3, 3, 50)
        assert_allclose(g(grid), 4.0 * f(grid))

    def test_running_max(self):
        grid = np.linspace(0.1, 2.0, 20)
        g = kfun.nondecreasing_majorant(lambda s: max(1.0 - s, 0.1), 4.0, grid=grid)
        assert_allclose(g(2.0), 3.6)


class TestPrimitive:
    def test_constant(self):
        ell = kfun.integral_primitive(kfun.Constant(2.0))
        assert_allclose(ell(3.0), 6.0)

    def test_power_law(self):
        ell = kfun.integral_primitive(kfun.power_law(3.0, 2.0))
        assert_allclose(ell([0.5, 2.0]), [0.125, 8.0], rtol=1e-10)

    def test_zero_at_origin(self):
        ell = kfun.integral_primitive(kfun.fsum(kfun.Constant(1.0), kfun.linear(1.0)))
        assert ell(0.0) == 0.0

    def test_non_converging_refinement(self):
        ell = kfun.Primitive(kfun.power_law(1.0, 0.01))
        with pytest.raises(QuadratureError):
            ell(1.0)


class TestRecords:
    @pytest.mark.parametrize('f', [
        kfun.linear(2.0),
        kfun.power_law(0.5, 3.0),
        kfun.Zero(),
        kfun.pointwise_min(kfun.linear(1.0), kfun.power_law(2.0, 0.5)),
        kfun.Tabulated((0.0, 1.0, 2.0), (0.0, 1.0, 3.0), tail_exponent=2.0),
    ])
    def test_rebuild_evaluates_the_same(self, f):
        g = kfun.from_record(f.to_record())
        grid = np.array([0.0, 0.3, 1.0, 4.0])
        assert_allclose(g(grid), f(grid))

    def test_unknown_kind(self):
        with pytest.raises(DomainError):
            kfun.from_record({'kind': 'cubic_spline'})
