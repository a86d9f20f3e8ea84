import json
import math

import numpy as np
import pytest
from scipy import integrate

from msde.errors import ValidationError
from msde.simulate import gaussian_lp_norm
from msde.verify import (ClaimSpec, builtin_suite_path, implied_constant, isotonic_residual, load_suite,
                         one_sided, oracles, parse_suite, run_claim, run_claims, run_suite, trend, two_sided)

SUITE = """
claims:
  - id: a
    scenario: chaos-residual
    params: {case: brownian-x, order: 0}
    decision: two-sided
    tolerance: 0.001
  - id: b
    scenario: range-projection
    params: {count: 20}
    tolerance: 1.0e-10
"""


class TestSuiteParsing:
    def test_parses_claims(self):
        claims = parse_suite(SUITE)
        assert [c.id for c in claims] == ["a", "b"]
        assert claims[0].params == {"case": "brownian-x", "order": 0}
        assert claims[1].decision == "two-sided" and claims[1].seed == 0

    def test_empty(self):
        assert parse_suite("") == []
        assert parse_suite("claims: []") == []

    def test_duplicate_ids(self):
        text = "claims:\n  - {id: x, scenario: s}\n  - {id: x, scenario: t}\n"
        with pytest.raises(ValidationError, match="duplicate"):
            parse_suite(text)

    @pytest.mark.parametrize("text", [
        "claims:\n  - {id: x, scenario: s, colour: red}\n",
        "claims:\n  - {id: x, scenario: s, decision: maybe}\n",
        "claims:\n  - {id: x, scenario: s, tolerance: -1}\n",
        "claims:\n  - {id: x, scenario: s, seed: abc}\n",
        "claims:\n  - {id: x, scenario: s, params: [1, 2]}\n",
        "claims:\n  - {scenario: s}\n",
        "claims:\n  - just-a-string\n",
        "claims: {id: x}\n",
        "other: 1\n",
        "claims: [\n",
    ])
    def test_invalid(self, text):
        with pytest.raises(ValidationError):
            parse_suite(text)

    def test_builtin_suite(self):
        path = builtin_suite_path("default.suite")
        claims = load_suite(path)
        ids = [c.id for c in claims]
        assert "eq-3.16" in ids and "lemma-5.3-brownian-x2" in ids
        assert len(ids) == len(set(ids))
        assert builtin_suite_path("missing.suite") is None


class TestDecisions:
    def test_one_sided(self):
        assert one_sided(1.0, 1.0, 0.0)
        assert one_sided(1.2, 1.0, 0.1)
        assert not one_sided(1.31, 1.0, 0.1)

    def test_two_sided(self):
        assert two_sided(2.0005, 2.0, 0.0, 1e-3)
        assert two_sided(1.7, 2.0, 0.1, 0.0)
        assert not two_sided(1.6, 2.0, 0.1, 0.05)

    def test_isotonic(self):
        assert isotonic_residual([3, 2, 1]) == 0.0
        assert isotonic_residual([1, 3]) == pytest.approx(1.0)
        assert isotonic_residual([1, 2, 3], increasing=True) == 0.0

    def test_trend_uses_error_bars(self):
        res, ok = trend([1.0, 1.1, 0.5], [0.0, 0.0, 0.0], 0.0)
        assert res == pytest.approx(0.05) and not ok
        assert trend([1.0, 1.1, 0.5], [0.02, 0.02, 0.02], 0.0)[1]

    def test_implied_constant(self):
        assert implied_constant(2.0, 4.0) == 0.5
        assert implied_constant(0.0, 0.0) == 0.0
        assert implied_constant(1.0, 0.0) == math.inf
        assert implied_constant(-1.0, 2.0) == 0.0
        assert implied_constant(1.0, None) is None


class TestOracles:
    def test_ball_occupation_frozen_and_independent(self):
        v = oracles.ball_occupation(2, 1.0, 1.0)
        assert v == pytest.approx(0.673356, abs=1e-6)
        # in d = 2, P(|w_s| < 1) = 1 - exp(-1 / (2 s))
        ref, _ = integrate.quad(lambda s: 1 - math.exp(-1 / (2 * s)), 0, 1)
        assert v == pytest.approx(ref, abs=1e-8)

    def test_ball_occupation_second_moment_frozen(self):
        assert oracles.ball_occupation_second_moment(2, 1.0, 1.0) == pytest.approx(0.519846, abs=1e-6)

    def test_second_moment_bounds(self):
        m1 = oracles.ball_occupation(2, 1.0, 1.0)
        m2 = oracles.ball_occupation_second_moment(2, 1.0, 1.0)
        assert m1**2 < m2 < m1

    @pytest.mark.parametrize("d,rho,value", [(2, 0.1, 0.004693), (2, 0.5, 0.11731), (1, 1.0, 0.69945)])
    def test_exit_time_frozen(self, d, rho, value):
        assert oracles.exit_time_capped(d, rho) == pytest.approx(value, abs=1e-5)

    def test_exit_time_one_dimensional_sine_series(self):
        # P(tau > t) for (-1, 1) expanded in the odd cosine modes
        k = np.arange(400)
        a = (2 * k + 1) * math.pi / 2
        ref = float(np.sum(4 / math.pi * (-1) ** k / (2 * k + 1) * (1 - np.exp(-a**2 / 2)) / (a**2 / 2)))
        assert oracles.exit_time_capped(1, 1.0) == pytest.approx(ref, abs=1e-8)

    def test_exit_time_scaling(self):
        assert oracles.exit_time_capped(3, 0.2) == pytest.approx(0.04 * oracles.exit_time_capped(3, 1.0),
                                                                 rel=1e-8)

    def test_heat_norm_frozen_and_independent(self):
        v = oracles.heat_time_integrated_norm(2, 1.0, 2.0, 1.5)
        assert v == pytest.approx(0.59931, abs=1e-5)
        ref, _ = integrate.quad(lambda t: gaussian_lp_norm(2, t, 2.0) ** 1.5, 0, 1)
        assert v == pytest.approx(ref, rel=1e-6)


class TestRunClaim:
    def test_zero_occupation_trivial_pass(self):
        row = run_claim(ClaimSpec("eq-3.16", "occupation-brownian", "one-sided", {"f": "zero", "constant": 1.0},
                                  {"M": 200, "dt": 0.01}, 0.0, 1))
        assert row["lhs"] == 0.0 and row["pass"] is True
        assert row["implied_constant"] == 0.0

    def test_chaos_claim(self):
        row = run_claim(ClaimSpec("lemma-5.3-brownian-x2", "chaos-residual", "two-sided",
                                  {"case": "brownian-x2", "order": 1}, {}, 1e-3, 0))
        assert row["lhs"] == pytest.approx(2.0, abs=1e-3) and row["rhs"] == 2.0 and row["pass"]

    def test_unknown_scenario_is_error_row(self):
        row = run_claim(ClaimSpec("x", "no-such-scenario"))
        assert row["pass"] is False and row["error"]["type"] == "ScenarioError"

    def test_unmet_precondition_is_error_row(self):
        row = run_claim(ClaimSpec("x", "simulate-moments", "two-sided", {"field": "inverse", "d": 2, "gamma": 1.0},
                                  {"M": 4, "dt": 0.01}, 0.1, 0))
        assert row["pass"] is False
        assert row["error"]["type"] == "SingularityError"

    def test_rhs_none_reports_implied_constant(self):
        row = run_claim(ClaimSpec("b", "occupation-brownian", "one-sided", {"f": "ball", "d": 2, "p": 6, "q": 6},
                                  {"M": 500, "dt": 0.02}, 0.0, 3))
        assert row["rhs"] is None and row["pass"] is True
        assert 0 < row["implied_constant"] < math.inf

    def test_reproducible_across_workers(self):
        spec = ClaimSpec("o", "ou-variance", "two-sided", {}, {"M": 3000, "dt": 0.01}, 0.0, 5)
        a, b = run_claim(spec, workers=1), run_claim(spec, workers=3)
        for key in ("lhs", "rhs", "std_error", "pass"):
            assert a[key] == b[key]

    def test_implied_constant_stable_under_budget(self):
        rows = []
        for M in (1000, 10000, 100000):
            rows.append(run_claim(ClaimSpec("b", "occupation-brownian", "one-sided",
                                            {"f": "ball", "d": 2, "p": 6, "q": 6}, {"M": M, "dt": 0.01}, 0.0, 3)))
        for small, large in zip(rows, rows[1:]):
            unit = small["lhs"] / small["implied_constant"]
            slack = 3 * math.hypot(small["std_error"], large["std_error"]) / unit
            assert large["implied_constant"] <= small["implied_constant"] + slack


class TestRunSuite:
    def test_empty_suite(self, tmp_path):
        p = tmp_path / "empty.suite"
        p.write_text("claims: []\n")
        rep = run_suite(str(p))
        assert rep.rows == [] and rep.passed

    def test_report_files(self, tmp_path):
        p = tmp_path / "s.suite"
        p.write_text(SUITE)
        rep = run_suite(str(p), claim_workers=2)
        assert [r["id"] for r in rep.rows] == ["a", "b"] and rep.passed
        rep.write(str(tmp_path / "r.json"), str(tmp_path / "r.txt"))
        js = json.loads((tmp_path / "r.json").read_text())
        assert js["pass"] is True and js["environment"]["seeds"] == {"a": 0, "b": 0}
        for row in js["rows"]:
            assert {"id", "lhs", "rhs", "std_error", "implied_constant", "pass"} <= set(row)
        table = (tmp_path / "r.txt").read_text().splitlines()
        assert table[0].split()[0] == "id" and "PASS" in table[2]

    def test_claim_order_preserved_in_parallel(self):
        claims = parse_suite(SUITE)
        assert [r["id"] for r in run_claims(claims, claim_workers=2)] == ["a", "b"]
