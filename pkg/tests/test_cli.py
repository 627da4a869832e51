"""Command-line interface: outputs, exit codes, determinism, round trips."""

import json
import os

import numpy as np
import pytest

from homcont import models
from homcont.cli import load_branch_solutions, main
from homcont.sequences import read_csv, sup_norm
from homcont.solver import residual


def run(tmp_path, *argv):
    return main([*argv, "--out-dir", str(tmp_path)])


class TestSpectrumCommand:
    def test_interval_case(self, tmp_path, capsys):
        code = run(tmp_path, "spectrum", "--model", "pw_linear", "--alpha", "0.5",
                   "--lambda", "0")
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["interval"] == "Z"
        (lo, hi), = payload["spectrum"]
        assert lo == pytest.approx(0.5, abs=1e-6)
        assert hi == pytest.approx(2.0, abs=1e-6)
        on_disk = json.loads((tmp_path / "spectrum.json").read_text())
        assert on_disk == payload
        csv_lines = (tmp_path / "spectrum.csv").read_text().splitlines()
        assert csv_lines[0] == "gamma_lo,gamma_hi"
        assert len(csv_lines) == 2

    def test_point_case(self, tmp_path, capsys):
        code = run(tmp_path, "spectrum", "--model", "pw_linear", "--alpha", "0.5",
                   "--lambda", "1")
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        np.testing.assert_allclose(payload["spectrum"], [[0.5, 0.5], [2.0, 2.0]], atol=1e-9)

    def test_unknown_model_is_usage_error(self, tmp_path, capsys):
        assert run(tmp_path, "spectrum", "--model", "nosuch") == 1
        assert "pw_linear" in capsys.readouterr().err


class TestSolveCommand:
    def test_csv_and_diagnostics(self, tmp_path):
        code = run(tmp_path, "solve", "--model", "scalar_affine", "--a", "0.5",
                   "--lambda", "1", "--window=-20:50", "--tol", "1e-12")
        assert code == 0
        phi = read_csv(tmp_path / "solution.csv")
        expected = np.array([[0.5 ** (t - 1) if t >= 1 else 0.0] for t in phi.window.indices()])
        np.testing.assert_allclose(phi.values, expected, atol=1e-13)
        diag = json.loads((tmp_path / "solve.json").read_text())
        assert diag["iterations"] <= 2
        assert diag["final_residual"] <= 1e-12

    def test_json_format_bundles_solution(self, tmp_path):
        code = run(tmp_path, "solve", "--model", "scalar_affine", "--lambda", "1",
                   "--window=-10:30", "--tail-tol", "1e-8", "--format", "json")
        assert code == 0
        payload = json.loads((tmp_path / "solution.json").read_text())
        # the zero-boundary truncation needs a**T below the residual
        # tolerance, so the starting window grows once
        assert payload["window"] == [-15, 45]
        assert payload["t"][0] == -15
        assert len(payload["values"]) == len(payload["t"])
        assert payload["final_residual"] <= 1e-12

    def test_numerical_failure_exit_code(self, tmp_path):
        code = run(tmp_path, "solve", "--model", "beverton_holt", "--lambda", "9",
                   "--window=-8:8", "--tol", "1e-15")
        assert code == 2


@pytest.fixture(scope="module")
def outputs(tmp_path_factory):
    out = tmp_path_factory.mktemp("branch")
    code = main([
        "continue", "--model", "transcritical", "--alpha", "0.5", "--delta", "1",
        "--lambda-star", "0.5", "--seed", "oracle", "--lambda-min", "0.1",
        "--lambda-max", "2.0", "--step", "0.05", "--max-step", "0.1",
        "--out-dir", str(out),
    ])
    assert code == 0
    return out


class TestContinueCommand:

    def test_branch_json_label(self, outputs):
        payload = json.loads((outputs / "branch.json").read_text())
        assert payload["classification"]["label"] == "(c)"
        assert payload["outcomes"]["plus"]["code"] == "UNBOUNDED"
        assert payload["outcomes"]["minus"]["code"] == "UNBOUNDED"
        assert "not a proof" in payload["classification"]["text"]

    def test_branch_csv_columns_and_order(self, outputs):
        lines = (outputs / "branch.csv").read_text().splitlines()
        assert lines[0] == "s,lambda,sup_norm,fold_flag,x1_0,x2_0"
        s_values = [float(line.split(",")[0]) for line in lines[1:]]
        assert s_values == sorted(s_values)
        assert s_values[0] < 0 < s_values[-1]

    def test_branch_csv_matches_oracle(self, outputs):
        bm = models.build("transcritical", alpha=0.5, delta=1.0)
        for line in (outputs / "branch.csv").read_text().splitlines()[1:]:
            _, lam, _, _, x1, x2 = (float(v) for v in line.split(","))
            xi1, xi2 = models.oracle_branch("transcritical", bm.parameters, lam)
            assert abs(x1 - xi1) <= 1e-6 and abs(x2 - xi2) <= 1e-6

    def test_solutions_round_trip_revalidates(self, outputs):
        bm = models.build("transcritical", alpha=0.5, delta=1.0)
        lambdas = {}
        payload = json.loads((outputs / "branch.json").read_text())
        sols = load_branch_solutions(outputs / "branch_solutions.csv")
        lines = (outputs / "branch.csv").read_text().splitlines()[1:]
        assert len(sols) == sum(o["points"] for o in payload["outcomes"].values())
        # reconstruct each stored point's parameter from the csv by matching x1_0
        by_x1 = {round(float(l.split(",")[4]), 12): float(l.split(",")[1]) for l in lines}
        checked = 0
        for (direction, idx), phi in sols.items():
            key = round(float(phi.at(0)[0]), 12)
            if key not in by_x1:
                continue
            lam = by_x1[key]
            assert sup_norm(residual(bm.model, phi, lam)) <= 1e-11
            checked += 1
        assert checked >= len(sols) - 2  # the shared start appears once in the csv


class TestDeterminism:
    def test_identical_runs_bitwise_equal(self, tmp_path):
        dirs = [tmp_path / "a", tmp_path / "b"]
        for d in dirs:
            d.mkdir()
            code = main([
                "continue", "--model", "transcritical", "--alpha", "0.5", "--delta", "1",
                "--lambda-star", "0.5", "--seed", "oracle", "--lambda-min", "0.3",
                "--lambda-max", "0.9", "--step", "0.05", "--rng-seed", "0",
                "--out-dir", str(d),
            ])
            assert code == 0
        for name in ("branch.csv", "branch.json", "branch_solutions.csv"):
            assert (dirs[0] / name).read_bytes() == (dirs[1] / name).read_bytes()


class TestAdmissibleCommand:
    def test_both_sides_reported(self, tmp_path, capsys):
        code = run(tmp_path, "admissible", "--model", "beverton_holt",
                   "--a-plus", "0.5,1.5", "--a-minus", "0.8", "--lambda", "0.3")
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["both_verified"]
        assert payload["forward_limit"]["criterion"] == "contractive"
        assert payload["forward_limit"]["numbers"]["sup_product"] == pytest.approx(0.75)

    def test_semilinear_reports_both_bounds(self, tmp_path, capsys):
        code = run(tmp_path, "admissible", "--model", "semilinear_demo", "--lambda", "0.2")
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        nums = payload["forward_limit"]["numbers"]
        assert "printed_bound" in nums and "contraction_bound" in nums


class TestIndexCommand:
    def test_prints_zero_for_coupled_family(self, tmp_path, capsys):
        code = run(tmp_path, "index", "--model", "pw_linear", "--alpha", "0.5",
                   "--lambda", "1")
        assert code == 0
        assert capsys.readouterr().out.strip() == "0"
        payload = json.loads((tmp_path / "index.json").read_text())
        assert payload == {"index": 0, "rank_plus": 1, "rank_minus": 1, "lambda": 1.0}

    def test_missing_dichotomy_is_numerical_failure(self, tmp_path, capsys):
        code = run(tmp_path, "index", "--model", "scalar_affine", "--a", "1.0",
                   "--lambda", "0.1")
        assert code == 2
        assert "Z_plus" in capsys.readouterr().err


class TestConfigFile:
    def test_model_from_json_config(self, tmp_path, capsys):
        cfg = tmp_path / "model.json"
        cfg.write_text(json.dumps({"model": "pw_linear", "alpha": 0.5}))
        code = run(tmp_path, "spectrum", "--config", str(cfg), "--lambda", "1")
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert len(payload["spectrum"]) == 2

    def test_missing_model_and_config(self, tmp_path):
        assert run(tmp_path, "spectrum") == 1


class TestThreading:
    def test_parallel_directions_match_sequential(self, tmp_path):
        results = {}
        for threads, sub in (("1", "seq"), ("2", "par")):
            d = tmp_path / sub
            d.mkdir()
            os.environ["HOMOCONT_THREADS"] = threads
            try:
                code = main([
                    "continue", "--model", "transcritical", "--alpha", "0.5",
                    "--delta", "1", "--lambda-star", "0.5", "--seed", "oracle",
                    "--lambda-min", "0.3", "--lambda-max", "0.8", "--step", "0.05",
                    "--out-dir", str(d),
                ])
            finally:
                os.environ.pop("HOMOCONT_THREADS", None)
            assert code == 0
            results[sub] = (d / "branch.csv").read_bytes()
        assert results["seq"] == results["par"]
