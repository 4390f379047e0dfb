import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose
from scipy import integrate

from sparsevar.penalties import (
    PenaltySpec, diagnose, local_concavity, penalty_derivative, penalty_value,
)


def quad_value(spec, x):
    """Integrate the derivative numerically, splitting at the branch points."""
    pts = [b for b in (spec.lam, spec.a * spec.lam) if 0 < b < x] if spec.kind != "l1" else []
    val, _ = integrate.quad(lambda t: penalty_derivative(spec, t), 0.0, x, points=pts or None,
                            epsabs=1e-13, epsrel=1e-13, limit=200)
    return val


specs = st.one_of(
    st.builds(lambda lam: PenaltySpec("l1", lam), st.floats(0.01, 5)),
    st.builds(lambda lam, a: PenaltySpec("scad", lam, a), st.floats(0.01, 5), st.floats(2.01, 30)),
    st.builds(lambda lam, a: PenaltySpec("mcp", lam, a), st.floats(0.01, 5), st.floats(1.0, 30)),
)


class TestSpec:
    def test_defaults(self):
        assert PenaltySpec("scad", 1).a == 3.7
        assert PenaltySpec("mcp", 1).a == 3.0
        assert PenaltySpec("lasso", 1).kind == "l1"

    @pytest.mark.parametrize("kind,lam,a", [
        ("scad", 1, 2.0), ("mcp", 1, 0.9), ("l1", 0, None), ("l1", -1, None), ("ridge", 1, None),
    ])
    def test_invalid(self, kind, lam, a):
        with pytest.raises(ValueError):
            PenaltySpec(kind, lam, a)

    def test_dict_roundtrip(self):
        for s in (PenaltySpec("l1", 0.3), PenaltySpec("scad", 0.2, 20), PenaltySpec("mcp", 1, 1.5)):
            assert PenaltySpec.from_dict(s.to_dict()) == s


class TestDerivative:
    def test_scad_flat_branch(self):
        assert penalty_derivative(PenaltySpec("scad", 1, 3.7), 0.5) == 1.0

    def test_scad_decay_branch(self):
        assert_allclose(penalty_derivative(PenaltySpec("scad", 1, 3.7), 2.0), 1.7 / 2.7, rtol=1e-15)
        assert_allclose(penalty_derivative(PenaltySpec("scad", 1, 3.7), 2.0), 0.629630, atol=1e-6)

    def test_mcp_zero_beyond_a_lambda(self):
        assert penalty_derivative(PenaltySpec("mcp", 1, 3), 4.0) == 0.0

    def test_l1_constant(self):
        x = np.linspace(0, 10, 7)
        assert_allclose(penalty_derivative(PenaltySpec("l1", 0.25), x), 0.25)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            penalty_derivative(PenaltySpec("l1", 1), -0.1)

    @given(specs)
    def test_nonincreasing(self, spec):
        x = np.linspace(0, 12 * spec.lam * (spec.a if spec.kind != "l1" else 1), 2001)
        d = penalty_derivative(spec, x)
        assert np.all(np.diff(d) <= 1e-12)

    @given(specs)
    def test_positive_at_zero(self, spec):
        assert penalty_derivative(spec, 1e-300) > 0
        assert penalty_derivative(spec, 0.0) == spec.lam

    @pytest.mark.parametrize("kind,a", [("scad", 3.7), ("scad", 2.5), ("mcp", 1.5), ("mcp", 20)])
    def test_continuity_at_branches(self, kind, a):
        spec = PenaltySpec(kind, 0.7, a)
        h = 1e-10
        for b in (spec.lam, spec.a * spec.lam):
            assert abs(penalty_derivative(spec, b + h) - penalty_derivative(spec, b)) < 1e-8
            assert abs(penalty_derivative(spec, b) - penalty_derivative(spec, b - h)) < 1e-8


class TestValue:
    def test_zero(self):
        for s in (PenaltySpec("l1", 1), PenaltySpec("scad", 1), PenaltySpec("mcp", 1)):
            assert penalty_value(s, 0.0) == 0.0

    def test_l1(self):
        assert penalty_value(PenaltySpec("l1", 0.5), -2.0) == 1.0

    def test_scad_against_quadrature(self):
        spec = PenaltySpec("scad", 1, 3.7)
        assert abs(penalty_value(spec, 5.0) - quad_value(spec, 5.0)) < 1e-8

    @settings(max_examples=100, deadline=None)
    @given(specs, st.floats(0, 1))
    def test_quadrature_random(self, spec, u):
        top = 10 * spec.lam * (spec.a if spec.kind != "l1" else 1)
        x = u * top
        assert abs(penalty_value(spec, x) - quad_value(spec, x)) < 1e-8

    @given(specs, st.floats(-50, 50))
    def test_symmetric(self, spec, x):
        assert penalty_value(spec, x) == penalty_value(spec, -x)

    def test_vectorised(self):
        spec = PenaltySpec("mcp", 1, 2)
        x = np.array([-3.0, -1.0, 0.0, 0.5, 3.0])
        assert_allclose(penalty_value(spec, x), [1.0, 0.75, 0.0, 0.4375, 1.0])


class TestConcavity:
    def test_l1_zero(self):
        assert local_concavity(PenaltySpec("l1", 1), [0.1, -3, 10]) == 0.0

    def test_scad_inside(self):
        assert_allclose(local_concavity(PenaltySpec("scad", 1, 3.7), [2.0]), 1 / 2.7)

    def test_scad_scales_with_lambda(self):
        assert_allclose(local_concavity(PenaltySpec("scad", 0.5, 3.7), [1.0]), 1 / (2.7 * 0.5))

    def test_mcp_outside(self):
        assert local_concavity(PenaltySpec("mcp", 0.5, 2), [5.0]) == 0.0

    def test_mcp_inside(self):
        assert_allclose(local_concavity(PenaltySpec("mcp", 0.5, 2), [0.3, 5.0]), 1.0)

    def test_zero_coordinate_rejected(self):
        with pytest.raises(ValueError):
            local_concavity(PenaltySpec("scad", 1), [1.0, 0.0])

    def test_matches_difference_quotients(self):
        # limit definition evaluated on a shrinking window away from branch points
        for spec in (PenaltySpec("scad", 1, 3.7), PenaltySpec("mcp", 1, 3)):
            for x in (0.3, 1.5, 2.5, 5.0):
                eps = 1e-6
                num = -(penalty_derivative(spec, x + eps) - penalty_derivative(spec, x - eps)) / (2 * eps) / spec.lam
                if spec.kind == "scad" and x < 1:
                    num = 0.0 if abs(num) < 1e-6 else num
                assert_allclose(local_concavity(spec, [x]), num, atol=1e-6)

    @given(specs, st.lists(st.floats(0.001, 100), min_size=1, max_size=5))
    def test_nonnegative(self, spec, xs):
        assert local_concavity(spec, xs) >= 0


class TestDiagnose:
    def test_scad_beyond(self):
        d = diagnose(PenaltySpec("scad", 0.1, 3.7), 1.0, q=15, T=500)
        assert d.rho_prime_at_d == 0.0
        assert d.weak_signal_hint
        assert d.d_over_lambda == pytest.approx(10.0)

    def test_l1(self):
        for lam in (0.01, 0.5, 3.0):
            d = diagnose(PenaltySpec("l1", lam), 0.7, q=5, T=100)
            assert d.rho_prime_at_d == 1.0
            assert d.kappa_sup == 0.0

    def test_mcp(self):
        d = diagnose(PenaltySpec("mcp", 0.2, 1.5), 0.1, q=1, T=1)
        assert_allclose(d.rho_prime_at_d, 0.2 / 0.3)
        assert_allclose(d.lambda_rho_prime_at_d, 0.2 / 1.5)
        assert_allclose(d.kappa_sup, 1 / 0.3)

    def test_finite(self):
        d = diagnose(PenaltySpec("scad", 0.05, 20), 0.05, q=15, T=300)
        assert all(math.isfinite(v) for v in (d.rho_prime_at_d, d.lambda_rho_prime_at_d,
                                             d.d_over_lambda, d.kappa_sup))
        assert d.kappa_sup >= 0

    def test_rejects_nonpositive_d(self):
        with pytest.raises(ValueError):
            diagnose(PenaltySpec("l1", 1), 0.0, 1, 1)
