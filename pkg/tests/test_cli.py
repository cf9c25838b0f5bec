import csv
import json
from pathlib import Path

import numpy as np
import pytest

from pnum.cli import benchmark_integral_truth, main, smooth_benchmark_integrand


def run_cli(tmp_path, command, config, name="out.csv", extra=()):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(config))
    out_path = tmp_path / name
    code = main([command, "--config", str(cfg_path), "--out", str(out_path),
                 *extra])
    return code, out_path


def read_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


class TestQuadCommand:
    def test_paper_example_runs(self, tmp_path):
        code, out = run_cli(tmp_path, "quad", {
            "integrand": "paper-example",
            "methods": ["trapezoid", "spline-bq", "eq-bq", "smc"],
            "budgets": [8, 16],
            "seeds": [0, 1],
        })
        assert code == 0
        rows = read_rows(out)
        methods = {r["method"] for r in rows}
        assert methods == {"trapezoid", "spline-bq", "eq-bq", "smc"}
        sidecar = json.loads(Path(str(out) + ".config.json").read_text())
        assert sidecar["command"] == "quad"

    def test_spline_bq_column_matches_trapezoid(self, tmp_path):
        code, out = run_cli(tmp_path, "quad", {
            "integrand": "paper-example",
            "methods": ["trapezoid", "spline-bq"],
            "budgets": [16],
        })
        rows = read_rows(out)
        by_method = {r["method"]: float(r["estimate"]) for r in rows}
        assert by_method["spline-bq"] == pytest.approx(by_method["trapezoid"],
                                                       rel=1e-9)

    def test_abs_error_recomputable_from_row(self, tmp_path):
        # self-consistency: abs_error equals |estimate - oracle| bit for bit
        code, out = run_cli(tmp_path, "quad", {
            "integrand": "paper-example",
            "methods": ["trapezoid", "eq-bq"],
            "budgets": [8, 32],
        })
        for row in read_rows(out):
            if row["oracle"]:
                recomputed = abs(float(row["estimate"]) - float(row["oracle"]))
                assert recomputed == float(row["abs_error"])

    def test_spline_draw_integrand(self, tmp_path):
        code, out = run_cli(tmp_path, "quad", {
            "integrand": "spline-draw",
            "methods": ["spline-bq"],
            "budgets": [10],
            "seeds": [0, 1, 2],
        })
        assert code == 0
        assert len(read_rows(out)) == 3

    def test_custom_grid_values(self, tmp_path):
        code, out = run_cli(tmp_path, "quad", {
            "integrand": "custom-grid-values",
            "methods": ["trapezoid", "spline-bq"],
            "budgets": [4],
            "custom_nodes": [-3.0, -1.0, 1.0, 3.0],
            "custom_values": [9.0, 1.0, 1.0, 9.0],
        })
        rows = read_rows(out)
        trap = [r for r in rows if r["method"] == "trapezoid"][0]
        assert float(trap["estimate"]) == pytest.approx(22.0)

    def test_unknown_key_rejected(self, tmp_path):
        code, _ = run_cli(tmp_path, "quad", {"integrand": "paper-example",
                                             "mystery_knob": 3})
        assert code == 2

    def test_bad_integrand_rejected(self, tmp_path):
        code, _ = run_cli(tmp_path, "quad", {"integrand": "nonexistent"})
        assert code == 2


class TestEvidenceCommand:
    def test_small_race(self, tmp_path):
        code, out = run_cli(tmp_path, "evidence", {
            "problem": "gaussian-2d",
            "methods": ["smc", "warped-bq", "ais"],
            "smc_budget": 256,
            "bq_budget": 5,
            "ais_n_temps": [8],
            "ais_n_chains": 8,
            "ais_mh_steps": 2,
            "seeds": [0],
        })
        assert code == 0
        rows = read_rows(out)
        assert {r["method"] for r in rows} == {"smc", "warped-bq", "ais-T8"}
        for r in rows:
            assert float(r["abs_log_error"]) >= 0.0


class TestLinsolveCommand:
    def test_cg_match_column(self, tmp_path):
        code, out = run_cli(tmp_path, "linsolve", {
            "operator": {"kind": "random_spd", "dim": 32, "seed": 0},
            "tol": 1e-10,
        })
        assert code == 0
        rows = read_rows(out)
        assert all(r["cg_match"] == "true" for r in rows)
        assert float(rows[-1]["residual_prob"]) <= 1e-9

    def test_numerical_failure_exit_code(self, tmp_path):
        A = np.diag([1.0, -1.0])
        path = tmp_path / "bad.csv"
        np.savetxt(path, A, delimiter=",")
        code, _ = run_cli(tmp_path, "linsolve", {
            "operator": {"kind": "csv", "path": str(path), "check": False},
            "rhs": [0.0, 1.0],
        })
        assert code == 3


class TestRecycleCommand:
    def test_default_table(self, tmp_path):
        code, out = run_cli(tmp_path, "recycle", {
            "dim": 16, "length": 4, "drift": 0.02, "rank": 32,
        })
        assert code == 0
        rows = read_rows(out)
        assert {r["variant"] for r in rows} == {"cold", "warm"}
        assert len(rows) == 8


class TestOdeCommand:
    def test_order_study(self, tmp_path):
        code, out = run_cli(tmp_path, "ode", {
            "mode": "order-study",
            "problem": "linear",
            "solvers": ["euler", "filter-q1"],
            "h_values": [0.1, 0.05, 0.025, 0.0125],
        })
        assert code == 0
        rows = read_rows(out)
        slopes = {r["solver"]: float(r["slope"]) for r in rows}
        assert 0.8 <= slopes["euler"] <= 1.2
        assert abs(slopes["euler"] - slopes["filter-q1"]) <= 0.1

    def test_trajectory_export(self, tmp_path):
        code, out = run_cli(tmp_path, "ode", {
            "mode": "trajectory",
            "problem": "logistic",
            "solver": "filter-q1",
            "h": 0.1,
        })
        assert code == 0
        rows = read_rows(out)
        assert list(rows[0].keys()) == ["t", "mean_0", "std_0"]
        assert len(rows) == 21


class TestDeterminism:
    @pytest.mark.parametrize("command,config", [
        ("quad", {"integrand": "paper-example",
                  "methods": ["trapezoid", "smc"], "budgets": [8, 16],
                  "seeds": [0]}),
        ("recycle", {"dim": 16, "length": 3, "drift": 0.02, "rank": 16}),
        ("ode", {"mode": "order-study", "problem": "linear",
                 "solvers": ["euler"], "h_values": [0.1, 0.05, 0.025, 0.0125]}),
    ])
    def test_reproducible_runs_byte_identical(self, tmp_path, command, config):
        _, out1 = run_cli(tmp_path, command, config, name="a.csv",
                          extra=("--reproducible",))
        _, out2 = run_cli(tmp_path, command, config, name="b.csv",
                          extra=("--reproducible",))
        assert out1.read_bytes() == out2.read_bytes()
        side1 = Path(str(out1) + ".config.json").read_text()
        side2 = Path(str(out2) + ".config.json").read_text()
        assert side1.replace("a.csv", "") == side2.replace("b.csv", "")

    def test_seed_flag_overrides(self, tmp_path):
        cfg = {"integrand": "spline-draw", "methods": ["spline-bq"],
               "budgets": [10], "seeds": [5]}
        _, out1 = run_cli(tmp_path, "quad", cfg, name="a.csv",
                          extra=("--seed", "3", "--reproducible"))
        _, out2 = run_cli(tmp_path, "quad", cfg, name="b.csv",
                          extra=("--seed", "4", "--reproducible"))
        assert out1.read_bytes() != out2.read_bytes()


class TestTruthCache:
    def test_benchmark_truth_cached_and_sane(self):
        t1 = benchmark_integral_truth()
        t2 = benchmark_integral_truth()
        assert t1 is t2 or t1 == t2
        xs = np.linspace(-3, 3, 200_001)
        coarse = np.trapezoid(smooth_benchmark_integrand(xs), xs)
        assert t1 == pytest.approx(coarse, abs=1e-9)
