"""Built-in models, closed-form oracles and config loading."""

import json

import numpy as np
import pytest

from homcont import models
from homcont.models import (
    NoRealBranchError,
    build,
    from_config,
    load_config,
    oracle_branch,
    oracle_solution,
    seed_homoclinic,
)
from homcont.sequences import Window, sup_norm, zeros
from homcont.solver import NewtonSettings, newton_solve, residual, validate_model


class TestBuild:
    def test_unknown_name_lists_builtins(self):
        with pytest.raises(ValueError, match="pw_linear"):
            build("harmonic")

    def test_unknown_parameter_rejected(self):
        with pytest.raises(ValueError, match="gamma"):
            build("pw_linear", gamma=2.0)

    def test_alpha_constraint(self):
        for bad in (0.0, 1.0, -1.2):
            with pytest.raises(ValueError):
                build("pw_linear", alpha=bad)

    def test_growth_tables_must_be_positive(self):
        with pytest.raises(ValueError):
            build("beverton_holt", a_plus=(0.5, -0.1))

    def test_coefficients_switch_at_zero(self):
        bm = build("pw_linear", alpha=0.5)
        A_neg = bm.model.df(-1, np.zeros(2), 0.7)
        A_pos = bm.model.df(0, np.zeros(2), 0.7)
        np.testing.assert_allclose(A_neg, [[2.0, 0.0], [0.7, 0.5]])
        np.testing.assert_allclose(A_pos, [[0.5, 0.0], [0.7, 2.0]])

    def test_quadratic_term_in_second_row(self):
        bm = build("transcritical", alpha=0.5, delta=1.0)
        out = bm.model.f(0, np.array([2.0, 0.0]), 0.0)
        assert out[1] == pytest.approx(4.0)  # delta * x1^2

    def test_all_builtins_validate(self):
        for name in models.BUILTIN_NAMES:
            validate_model(build(name).model)


class TestOracleBranch:
    def test_transcritical_values(self):
        xi1, xi2 = oracle_branch("transcritical", {"alpha": 0.5, "delta": 1.0}, 0.1)
        assert xi1 == pytest.approx(-14.0 / 90.0)
        assert xi2 == pytest.approx(-28.0 / 8100.0)

    def test_pitchfork_both_signs(self):
        params = {"alpha": 0.5, "delta": -1.0}
        plus = oracle_branch("pitchfork", params, 0.5, sign=+1)
        minus = oracle_branch("pitchfork", params, 0.5, sign=-1)
        assert plus[0] == pytest.approx(1.0)
        assert minus[0] == pytest.approx(-1.0)
        assert plus[1] == pytest.approx(0.2)
        # the whole system is odd under state negation, so the mirrored arm
        # negates both components
        assert minus[1] == pytest.approx(-plus[1])

    def test_pitchfork_without_real_branch(self):
        with pytest.raises(NoRealBranchError):
            oracle_branch("pitchfork", {"alpha": 0.5, "delta": 1.0}, 0.5)


class TestOracleSolution:
    PARAMS = {"alpha": 0.5}

    def test_decay_of_first_component(self):
        val = oracle_solution(self.PARAMS, (1.0, 0.0), 0.0, 3)
        assert val[0] == pytest.approx(0.125)

    def test_zero_initial_value(self):
        for t in (-5, 0, 7):
            np.testing.assert_array_equal(oracle_solution(self.PARAMS, (0.0, 0.0), 0.3, t), 0.0)

    def test_first_component_closed_form(self):
        for t in range(-9, 10):
            val = oracle_solution(self.PARAMS, (1.0, 1.0), 1.0, t)
            assert val[0] == pytest.approx(0.5 ** abs(t))

    @pytest.mark.parametrize("t", [8, -8])
    def test_second_component_matches_asymptotic_leading_term(self, t):
        alpha, lam = 0.5, 1.0
        xi = (1.0, 1.0)
        val = oracle_solution(self.PARAMS, xi, lam, t)
        coupling = lam * alpha / (alpha**2 - 1.0) * xi[0]
        if t > 0:
            leading = alpha ** (-t) * (xi[1] - coupling)
        else:
            leading = alpha ** (t) * (xi[1] + coupling)
        assert abs(val[1] - leading) <= 0.05 * abs(leading)


class TestSeededHomoclinics:
    @pytest.mark.parametrize(
        "name,params,lam,sign",
        [
            ("transcritical", {"alpha": 0.5, "delta": 1.0, "lambda_star": 0.5}, 0.4, 1),
            ("transcritical", {"alpha": -0.5, "delta": 2.0, "lambda_star": 0.5}, 0.3, 1),
            ("pitchfork", {"alpha": 0.5, "delta": -1.0, "lambda_star": 0.5}, 0.5, 1),
            ("pitchfork", {"alpha": 0.5, "delta": -1.0, "lambda_star": 0.5}, 0.5, -1),
        ],
    )
    def test_seed_is_numerically_exact(self, name, params, lam, sign):
        bm = build(name, **params)
        window = Window(-80, 80)  # tails below 1e-12 * scale
        seed = seed_homoclinic(name, bm.parameters, lam, window, sign)
        assert sup_norm(residual(bm.model, seed, lam)) <= 1e-10
        assert max(np.max(np.abs(seed.values[0])), np.max(np.abs(seed.values[-1]))) < 1e-12
        xi1, xi2 = oracle_branch(name, bm.parameters, lam, sign)
        np.testing.assert_allclose(seed.at(0), [xi1, xi2], atol=1e-12)

    def test_linear_family_homoclinics_are_trivial(self):
        # any small start collapses onto the zero solution when coupled
        bm = build("pw_linear", alpha=0.5)
        settings = NewtonSettings(residual_tol=1e-12, tail_tol=1e-8)
        for seed in range(5):
            rng = np.random.default_rng(seed)
            start = zeros(Window(-20, 20), 2).with_values(
                0.1 * rng.standard_normal((41, 2))
            )
            phi, _ = newton_solve(bm.model, start, 1.0, settings)
            assert sup_norm(phi) <= 1e-8


class TestConfig:
    def test_builtin_roundtrip(self, tmp_path):
        path = tmp_path / "model.json"
        path.write_text(json.dumps({"model": "transcritical", "alpha": 0.5, "delta": 1.0}))
        bm = from_config(load_config(path))
        assert bm.name == "transcritical"
        assert bm.parameters["alpha"] == 0.5

    def test_toml_config(self, tmp_path):
        path = tmp_path / "model.toml"
        path.write_text('model = "beverton_holt"\na_plus = [0.5, 1.5]\n')
        bm = from_config(load_config(path))
        assert bm.parameters["a_plus"] == (0.5, 1.5)

    def test_config_requires_model_key(self):
        with pytest.raises(ValueError, match="'model'"):
            from_config({"alpha": 0.5})

    def test_custom_model_matches_builtin(self):
        cfg = {
            "model": "custom",
            "dim": 2,
            "linear_minus": [[[2.0, 0.0], [0.0, 0.5]]],
            "linear_plus": [[[0.5, 0.0], [0.0, 2.0]]],
            "coupling_minus": [[[0.0, 0.0], [1.0, 0.0]]],
            "coupling_plus": [[[0.0, 0.0], [1.0, 0.0]]],
            "nonlinear": [{"row": 1, "powers": [2, 0], "coeff": 1.0}],
            "lambda_star": 0.5,
        }
        custom = from_config(cfg)
        builtin = build("transcritical", alpha=0.5, delta=1.0)
        rng = np.random.default_rng(0)
        for _ in range(20):
            t = int(rng.integers(-10, 10))
            x = rng.standard_normal(2)
            lam = float(rng.uniform(-1, 1))
            np.testing.assert_allclose(
                custom.model.f(t, x, lam), builtin.model.f(t, x, lam), atol=1e-14
            )
            np.testing.assert_allclose(
                custom.model.df(t, x, lam), builtin.model.df(t, x, lam), atol=1e-14
            )
        validate_model(custom.model)

    def test_custom_model_limit_structure(self):
        cfg = {
            "model": "custom",
            "dim": 1,
            "linear_minus": [[[0.5]]],
            "linear_plus": [[[0.3]], [[0.9]]],
            "lambda_star": 0.0,
        }
        bm = from_config(cfg)
        assert bm.model.limit_plus.period == 2
        assert bm.model.limit_minus.period == 1
