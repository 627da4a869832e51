"""Certificates for limit equations and the discrete Green's function."""

import numpy as np
import pytest

from homcont import models
from homcont.admissibility import (
    LimitSystem,
    check_asymptotically_linear,
    check_contractive,
    check_limit_admissibility,
    check_semilinear,
    green_function,
    green_sup_norm,
    iterate_limit_map,
    kappa_closed_form,
    kappa_green_sum,
    kappa_series,
    limit_system_at,
)
from homcont.dichotomy import constant_system, detect_dichotomy
from homcont.sequences import Window


def saturating(rate):
    return lambda t, x: rate * x / (1.0 + np.abs(x))


class TestContractive:
    def test_uniform_rate_below_one(self):
        sys = LimitSystem(1, 1, saturating(0.9), lip=np.array([0.9]))
        cert = check_contractive(sys)
        assert cert.verified and cert.numbers["n"] == 1
        assert cert.numbers["sup_product"] == pytest.approx(0.9)

    def test_two_periodic_needs_two_steps(self):
        def rhs(t, x):
            return (2.0 if t % 2 == 0 else 0.3) * x / (1.0 + np.abs(x))

        sys = LimitSystem(1, 2, rhs, lip=np.array([2.0, 0.3]))
        cert = check_contractive(sys)
        assert cert.verified
        assert cert.numbers["n"] == 2
        assert cert.numbers["sup_product"] == pytest.approx(0.6)

    def test_unit_lipschitz_never_verifies(self):
        sys = LimitSystem(1, 1, lambda t, x: np.sin(x), lip=np.array([1.0]))
        cert = check_contractive(sys, n_max=12)
        assert not cert.verified

    @pytest.mark.parametrize("seed", range(5))
    def test_monotone_under_scaling_down(self, seed):
        rng = np.random.default_rng(seed)
        lip = rng.uniform(0.2, 1.4, 3)
        base = LimitSystem(1, 3, lambda t, x: lip[t % 3] * np.tanh(x), lip=lip)
        if check_contractive(base).verified:
            small = LimitSystem(
                1, 3, lambda t, x: 0.5 * lip[t % 3] * np.tanh(x), lip=0.5 * lip
            )
            assert check_contractive(small).verified

    def test_periodicity_spot_check_rejects_lies(self):
        with pytest.raises(ValueError, match="periodic"):
            LimitSystem(1, 2, lambda t, x: (1 + (t % 3)) * x, lip=np.array([1.0, 2.0]))

    def test_lipschitz_spot_check_rejects_lies(self):
        with pytest.raises(ValueError, match="Lipschitz"):
            LimitSystem(1, 1, lambda t, x: 2.0 * x, lip=np.array([0.5]))


class TestGreenFunction:
    def test_stable_scalar(self):
        sys = constant_system(np.array([[0.5]]))
        rep = detect_dichotomy(sys, "Z")
        assert green_function(sys, rep, 3, 1)[0, 0] == pytest.approx(0.25)
        assert green_function(sys, rep, 1, 3)[0, 0] == 0.0

    def test_unstable_scalar(self):
        sys = constant_system(np.array([[2.0]]))
        rep = detect_dichotomy(sys, "Z")
        assert green_function(sys, rep, 3, 1)[0, 0] == 0.0
        assert green_function(sys, rep, 1, 3)[0, 0] == pytest.approx(-0.25)

    def test_saddle_combines_blocks(self):
        sys = constant_system(np.diag([0.5, 2.0]))
        rep = detect_dichotomy(sys, "Z")
        G_fwd = green_function(sys, rep, 2, 0)
        np.testing.assert_allclose(G_fwd, np.diag([0.25, 0.0]), atol=1e-12)
        G_bwd = green_function(sys, rep, 0, 2)
        np.testing.assert_allclose(G_bwd, np.diag([0.0, -0.25]), atol=1e-12)

    @pytest.mark.parametrize("seed", range(4))
    def test_jump_identity(self, seed):
        rng = np.random.default_rng(seed)
        A = rng.standard_normal((2, 2))
        A = A / (np.max(np.abs(np.linalg.eigvals(A))) * 2.5)  # strongly stable
        A[0, 0] += 3.0 * (seed % 2)  # sometimes make it a saddle
        sys = constant_system(A)
        rep = detect_dichotomy(sys, "Z")
        if not rep.has_ed:
            pytest.skip("random draw not hyperbolic")
        for s in (-2, 0, 3):
            for t in (-4, -1, 0, 2, 5):
                G_next = green_function(sys, rep, t + 1, s)
                G_here = green_function(sys, rep, t, s)
                if t + 1 != s:
                    np.testing.assert_allclose(G_next, A @ G_here, atol=1e-9)
            jump = green_function(sys, rep, s, s) - A @ green_function(sys, rep, s - 1, s)
            np.testing.assert_allclose(jump, np.eye(2), atol=1e-9)

    def test_sup_norm_of_stable_scalar(self):
        sys = constant_system(np.array([[0.5]]))
        rep = detect_dichotomy(sys, "Z", Window(-130, 130))
        total = green_sup_norm(sys, rep, t_samples=[0], s_radius=120)
        assert total == pytest.approx(1.0 / (1.0 - 0.5), abs=1e-9)


class TestSemilinear:
    @pytest.fixture
    def stable_scalar(self):
        return constant_system(np.array([[0.5]]))

    def test_zero_lipschitz_verifies(self, stable_scalar):
        assert check_semilinear(stable_scalar, 0.0).verified

    def test_bounds_for_stable_scalar(self, stable_scalar):
        cert = check_semilinear(stable_scalar, 0.2)
        assert cert.verified
        assert cert.numbers["contraction_bound"] == pytest.approx(1.0 / 3.0)
        assert cert.numbers["printed_bound"] == pytest.approx(2.0)

    def test_printed_bound_only_is_flagged(self, stable_scalar):
        cert = check_semilinear(stable_scalar, 0.4)
        assert not cert.verified
        assert "printed bound" in cert.reason

    def test_no_dichotomy_reported(self):
        cert = check_semilinear(constant_system(np.array([[1.0]])), 0.1)
        assert not cert.verified
        assert "no dichotomy" in cert.reason


class TestKappa:
    def test_closed_form_value(self):
        assert kappa_closed_form(1.0, 0.5, 2.0) == pytest.approx(0.645497, abs=1e-6)

    def test_series_matches_closed_form(self):
        for alpha in (0.3, 0.5, 0.8):
            for p in (1.5, 2.0, 3.0):
                cf = kappa_closed_form(1.0, alpha, p)
                se = kappa_series(1.0, alpha, p, terms=60)
                assert se == pytest.approx(cf, abs=1e-6)

    def test_green_sum_for_saddle(self):
        sys = constant_system(np.diag([0.5, 2.0]))
        rep = detect_dichotomy(sys, "Z")
        val = kappa_green_sum(sys, rep, 2.0, t_samples=[0], s_radius=100)
        assert val == pytest.approx(np.sqrt(5.0 / 3.0), abs=1e-9)


class TestAsymptoticallyLinear:
    def test_zero_norms_verify(self):
        sys = constant_system(np.array([[0.5]]))
        cert = check_asymptotically_linear(sys, 2.0, 2.0, 0.0, 0.0, 0.0)
        assert cert.verified

    def test_large_growth_fails(self):
        sys = constant_system(np.array([[0.5]]))
        cert = check_asymptotically_linear(sys, 2.0, 2.0, 0.4, 0.4, 0.1)
        assert not cert.verified
        # the printed closed form alone would allow rho+mu < 1/(2*0.6455) = 0.7746
        assert cert.numbers["kappa_closed_form"] == pytest.approx(0.645497, abs=1e-6)

    def test_conjugate_exponents_enforced(self):
        sys = constant_system(np.array([[0.5]]))
        with pytest.raises(ValueError):
            check_asymptotically_linear(sys, 2.0, 3.0, 0.0, 0.0, 0.0)


class TestModelDispatch:
    def test_beverton_holt_tables(self):
        bh = models.build("beverton_holt", a_minus=(0.8,), a_plus=(0.5, 1.5))
        cm, cp = check_limit_admissibility(bh.model, 0.3)
        assert cm.criterion == "contractive" and cm.verified
        assert cp.criterion == "contractive" and cp.verified
        assert cp.numbers["sup_product"] == pytest.approx(0.75)

    def test_supercritical_table_fails(self):
        bh = models.build("beverton_holt", a_minus=(1.4,), a_plus=(0.8,))
        cm, cp = check_limit_admissibility(bh.model, 0.3)
        assert not cm.verified and cp.verified

    def test_triangular_cascade_for_polynomial_family(self):
        for name in ("pw_linear", "transcritical", "pitchfork"):
            bm = models.build(name)
            cm, cp = check_limit_admissibility(bm.model, 0.7)
            assert cm.criterion == cp.criterion == "periodic_floquet"
            assert cm.verified and cp.verified

    def test_semilinear_demo_depends_on_parameter(self):
        sd = models.build("semilinear_demo", a=0.5, beta=0.4)
        cm, cp = check_limit_admissibility(sd.model, 0.2)
        assert cm.criterion == "semilinear" and cm.verified
        _, cp_big = check_limit_admissibility(sd.model, 5.0)
        assert not cp_big.verified

    def test_missing_limits_raise(self):
        bm = models.build("scalar_affine")
        from dataclasses import replace

        bare = replace(bm.model, limit_minus=None, limit_plus=None)
        with pytest.raises(ValueError, match="no certificate"):
            check_limit_admissibility(bare, 0.0)


class TestFixedPointIteration:
    @pytest.mark.parametrize("seed", [0, 1])
    def test_two_starts_converge_to_same_sequence(self, seed):
        bh = models.build("beverton_holt", a_minus=(0.8,), a_plus=(0.5, 1.5))
        sys = limit_system_at(bh.model.limit_plus, 1, 0.0)
        assert check_contractive(sys).verified
        rng = np.random.default_rng(seed)
        window = Window(-15, 15)
        a = iterate_limit_map(sys, rng.uniform(-1, 1, (window.length, 1)), window, 90)
        b = iterate_limit_map(sys, rng.uniform(-1, 1, (window.length, 1)), window, 90)
        assert np.max(np.abs(a - b)) < 1e-8
