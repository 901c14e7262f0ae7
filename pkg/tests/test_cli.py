import json
from pathlib import Path

import pytest

from robusthedge.cli import run

FIX = Path(__file__).parent / "fixtures"


def _run(tmp_path, *argv):
    out = tmp_path / "report.json"
    code = run([*map(str, argv), "--out", str(out)])
    return code, (json.loads(out.read_text()) if out.exists() else None), out


def test_price_super_unique_coupling(tmp_path):
    code, rep, _ = _run(tmp_path, "price-super", "--market", FIX / "coupling_market.json",
                        "--payoff", FIX / "abs_move.json")
    assert code == 0
    assert rep["primal"] == pytest.approx(20.0, abs=1e-9) and rep["gap"] <= 1e-7
    assert set(rep) == {"primal", "dual", "gap", "hedge", "measure"}
    assert set(rep["hedge"]) == {"cash", "static_legs", "dynamic_legs"}


def test_check_order_reversed(tmp_path):
    code, rep, _ = _run(tmp_path, "check-order", "--market", FIX / "reversed_market.json")
    assert code == 2
    assert rep["order_violations"]


def test_price_quantile_alpha_zero(tmp_path):
    code, rep, _ = _run(tmp_path, "price-quantile", "--market", FIX / "two_date_market.json",
                        "--payoff", FIX / "lookback.json", "--scenarios", FIX / "scenarios_two_date.json",
                        "--alpha", 0)
    assert code == 0
    assert rep["upper_bound"] == 0 and rep["lower_bound"] == 0 and rep["H"] == []
    assert rep["method"] == "exhaustive"


def test_price_quantile_positive_alpha(tmp_path):
    code, rep, _ = _run(tmp_path, "price-quantile", "--market", FIX / "two_date_market.json",
                        "--payoff", FIX / "lookback.json", "--scenarios", FIX / "scenarios_two_date.json",
                        "--alpha", 0.5)
    assert code == 0
    assert rep["lower_bound"] <= rep["upper_bound"] + 1e-7
    assert all(p >= 0.5 - 1e-9 for p in rep["hedge_check"]["success_prob"].values())
    assert rep["hedge_check"]["psi_min"] >= -1e-9


def test_price_shortfall(tmp_path):
    code, rep, _ = _run(tmp_path, "price-shortfall", "--market", FIX / "coupling_market.json",
                        "--payoff", FIX / "abs_move.json", "--utility", FIX / "exp_utility.json", "--alpha", 0.5)
    assert code == 0
    assert rep["price"] == pytest.approx(20.6931471806, abs=1e-9)
    assert rep["feasibility"]["pointwise_feasible"]


def test_calibrate(tmp_path):
    code, rep, _ = _run(tmp_path, "calibrate", "--calls", FIX / "calls_1.csv", FIX / "calls_2.csv", "--spot", 100)
    assert code == 0
    assert rep["convex_order"]["passed"]
    assert rep["marginals"][1]["support"] == [80.0, 120.0]


def test_input_error_leaves_no_file(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    code, rep, out = _run(tmp_path, "price-super", "--market", bad, "--payoff", FIX / "lookback.json")
    assert code == 4 and not out.exists()
    code, _, out = _run(tmp_path, "price-super", "--market", FIX / "coupling_market.json")
    assert code == 4 and not out.exists()


def test_infeasible_model_exit_code(tmp_path):
    code, _, out = _run(tmp_path, "price-super", "--market", FIX / "reversed_market.json",
                        "--payoff", FIX / "lookback.json")
    assert code == 2 and not out.exists()


def test_plateau_is_input_error(tmp_path):
    util = tmp_path / "u.json"
    util.write_text(json.dumps({"kind": "piecewise_linear", "params": {"knots": [[0, 0], [1, 1], [2, 1]]}}))
    code, _, out = _run(tmp_path, "price-shortfall", "--market", FIX / "coupling_market.json",
                        "--payoff", FIX / "lookback.json", "--utility", util, "--alpha", 1)
    assert code == 4 and not out.exists()


def test_deterministic_bytes(tmp_path):
    args = ["price-quantile", "--market", FIX / "two_date_market.json", "--payoff", FIX / "lookback.json",
            "--scenarios", FIX / "scenarios_two_date.json", "--alpha", 0.6]
    _, _, out = _run(tmp_path, *args)
    first = out.read_bytes()
    out.unlink()
    _run(tmp_path, *args)
    assert out.read_bytes() == first


def test_dump_lp(tmp_path):
    lp = tmp_path / "p.lp"
    code, _, _ = _run(tmp_path, "price-super", "--market", FIX / "two_date_market.json",
                      "--payoff", FIX / "lookback.json", "--dump-lp", lp)
    assert code == 0 and "Subject To" in lp.read_text()


def test_solver_failure_exit_code(tmp_path, monkeypatch):
    from robusthedge import cli
    from robusthedge.errors import SolverFailure

    def boom(*args, **kwargs):
        raise SolverFailure("iteration limit", {"iterations": 0})

    monkeypatch.setattr(cli, "superhedge_price", boom)
    code, _, out = _run(tmp_path, "price-super", "--market", FIX / "coupling_market.json",
                        "--payoff", FIX / "lookback.json")
    assert code == 3 and not out.exists()
