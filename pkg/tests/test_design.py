import json
import math

import numpy as np
import pytest
from scipy import stats

from advrobust import design as D
from advrobust.distributions import exponential, expect, standard_normal, tabulated, uniform
from advrobust.errors import (
    DegenerateEstimatorError,
    InfeasibleBudgetError,
    InvalidParameterError,
    OutOfRegimeError,
)
from advrobust.population import PopulationContext, aif_population, gross_error_sensitivity


def pop(design, p=2):
    ctx = PopulationContext(design.model, design.to_psispec())
    return aif_population(ctx, p).value, gross_error_sensitivity(ctx)


@pytest.fixture(scope="module")
def exp3():
    return D.exponential_tradeoff(3.0)


@pytest.fixture(scope="module")
def normal2():
    return D.tradeoff_location(standard_normal(), 2.0)


@pytest.fixture(scope="module")
def normal50():
    return D.tradeoff_location(standard_normal(), 50.0)


@pytest.fixture(scope="module")
def exp_scale3():
    return D.tradeoff_scale(exponential(), 3.0)


class TestMinAif:
    def test_location_is_mean(self):
        d = D.min_aif_location()
        assert d.gprime(0.7) == 1.0
        assert d.psi(2.5) == 2.5

    def test_location_population(self):
        d = D.min_aif_location(standard_normal())
        aif, gamma = pop(d)
        assert aif == pytest.approx(1.0, abs=1e-12)
        assert gamma == math.inf

    def test_location_anchor_centres(self):
        d = D.min_aif_location(exponential())
        assert d.psi(1.0) == pytest.approx(0.0, abs=1e-12)
        assert D.kkt_ok(D.kkt_residuals(d))

    @pytest.mark.parametrize(
        "model, slope, aif",
        [
            (standard_normal(), 1.0, 1.0),
            (uniform(0, 1), 3.0, math.sqrt(3)),
            (exponential(), 0.5, 1 / math.sqrt(2)),
        ],
        ids=["normal", "uniform", "exponential"],
    )
    def test_scale(self, model, slope, aif):
        d = D.min_aif_scale(model)
        assert d.gprime(0.8) == pytest.approx(slope * 0.8, rel=1e-12)
        assert d.diagnostics["aif"] == pytest.approx(aif, rel=1e-10)
        assert pop(d)[0] == pytest.approx(aif, rel=1e-8)
        assert D.kkt_ok(D.kkt_residuals(d))

    def test_scale_normal_is_shifted_square(self):
        # psi = (x^2 - 1)/2: derivative is negative on x < 0 (no sign constraint here)
        d = D.min_aif_scale(standard_normal())
        x = np.array([-2.0, 0.0, 1.5])
        assert np.allclose(d.psi(x), (x**2 - 1) / 2, atol=1e-12)
        assert d.gprime(-1.0) == pytest.approx(-1.0)
        assert d.psi_neg_inf == math.inf

    def test_scale_uniform_anchor(self):
        d = D.min_aif_scale(uniform(0, 1))
        assert d.psi_neg_inf == pytest.approx(-0.5, abs=1e-12)
        assert d.psi(5.0) == pytest.approx(1.0, abs=1e-12)

    def test_scale_degenerate(self):
        with pytest.raises(DegenerateEstimatorError):
            D.min_aif_scale(uniform(0.0, 1e-200))


class TestExponentialClosedForm:
    def test_root(self, exp3):
        assert exp3.diagnostics["a"] == pytest.approx(4.8, abs=0.05)
        assert exp3.diagnostics["unique_root"]

    def test_root_solves_equation(self):
        for xi in (1.5, 2.0, 3.0, 10.0, 50.0):
            a, d = D._exp_root(xi)
            lhs = math.exp(-a) * ((xi + 1) * a + xi + 2)
            assert lhs == pytest.approx(d, rel=1e-10)

    def test_multipliers(self, exp3):
        a = exp3.diagnostics["a"]
        m = exp3.multipliers
        assert m.nu == pytest.approx(5 / a, rel=1e-14)
        assert m.theta1 == pytest.approx((5 - a) / a**2, rel=1e-10)
        assert m.theta2 == 0.0
        assert m.nu == pytest.approx(1.0417, abs=1e-3)
        assert m.theta1 == pytest.approx(0.0087, abs=2e-4)

    def test_derivative_form(self, exp3):
        m = exp3.multipliers
        x = np.linspace(0.1, 4.7, 9)
        assert np.allclose(exp3.gprime(x), m.nu + m.theta1 - m.theta1 * np.exp(x), rtol=1e-12)
        assert exp3.gprime(5.0) == 0.0
        assert exp3.gprime(-0.1) == 0.0

    def test_anchor_and_ceiling(self, exp3):
        # psi(0) = -1 from Fisher consistency, psi(inf) = xi
        assert exp3.psi_neg_inf == pytest.approx(-1.0, abs=1e-10)
        assert exp3.psi(0.0) == pytest.approx(-1.0, abs=1e-10)
        assert exp3.psi(100.0) == pytest.approx(3.0, abs=1e-8)
        assert exp3.psi_pos_inf == pytest.approx(3.0, abs=1e-8)

    def test_gross_error_sensitivity(self, exp3):
        assert pop(exp3)[1] == pytest.approx(3.0, abs=1e-3)

    def test_psi_matches_antiderivative(self, exp3):
        m, a = exp3.multipliers, exp3.diagnostics["a"]
        x = np.linspace(0, a, 50)
        closed = -1.0 + (m.nu + m.theta1) * x - m.theta1 * np.expm1(x)
        assert np.allclose(exp3.psi(x), closed, atol=1e-10)

    @pytest.mark.parametrize("xi", [1.0, 0.5])
    def test_out_of_regime(self, xi):
        with pytest.raises(OutOfRegimeError):
            D.exponential_tradeoff(xi)

    def test_large_budget(self):
        d = D.exponential_tradeoff(50.0)
        assert d.multipliers.theta1 > 0
        assert d.diagnostics["aif"] == pytest.approx(1.0, abs=1e-10)
        assert D.kkt_ok(D.kkt_residuals(d))


class TestTradeoffLocation:
    @pytest.mark.parametrize("xi", [2.0, 3.0, 5.0])
    def test_matches_closed_form(self, xi):
        g = D.tradeoff_location(exponential(), xi)
        c = D.exponential_tradeoff(xi)
        assert g.active_region[0][1] == pytest.approx(c.diagnostics["a"], abs=1e-8)
        assert g.multipliers.nu == pytest.approx(c.multipliers.nu, abs=1e-10)
        assert g.multipliers.theta1 == pytest.approx(c.multipliers.theta1, abs=1e-10)
        assert g.multipliers.theta2 == 0.0

    def test_normal_symmetric_multipliers(self, normal2):
        m = normal2.multipliers
        assert m.theta1 == pytest.approx(m.theta2, abs=1e-6)
        a, b = normal2.active_region[0]
        assert a == pytest.approx(-b, abs=1e-8)
        assert normal2.diagnostics["case"] == "both"

    def test_normal_trims_both_tails(self, normal2):
        eps = normal2.diagnostics["tail_epsilon"]
        assert eps > 0
        m = normal2.model
        xs = np.concatenate([m.ppf(np.linspace(1e-9, eps * 0.999, 50)), m.isf(np.linspace(1e-9, eps * 0.999, 50))])
        assert np.all(normal2.gprime(xs) == 0.0)

    def test_normal_budget_is_active(self, normal2):
        aif, gamma = pop(normal2)
        assert gamma == pytest.approx(2.0, abs=1e-8)
        assert aif == pytest.approx(normal2.diagnostics["aif"], rel=1e-8)
        assert aif > 1.0

    def test_normal_large_budget(self, normal50):
        assert normal50.diagnostics["aif"] == pytest.approx(1.0, abs=1e-2)
        assert normal50.multipliers.theta1 < 1e-100
        assert normal50.multipliers.theta2 < 1e-100
        assert np.allclose(normal50.gprime(np.linspace(-5, 5, 11)), normal50.multipliers.nu, rtol=1e-12)

    def test_infeasible_reports_smallest_budget(self):
        # the median attains the smallest gross-error sensitivity sqrt(pi/2)
        with pytest.raises(InfeasibleBudgetError) as info:
            D.tradeoff_location(standard_normal(), 1.2)
        assert info.value.min_feasible_xi == pytest.approx(math.sqrt(math.pi / 2), rel=2e-4)

    def test_rejects_nonpositive_budget(self):
        with pytest.raises(InvalidParameterError):
            D.tradeoff_location(standard_normal(), 0.0)

    def test_beats_huber_at_same_sensitivity(self, normal2):
        # Huber with b/(2 Phi(b) - 1) = 2 meets the same budget but is not AIF-optimal
        from scipy import optimize
        b = optimize.brentq(lambda b: b / (2 * stats.norm.cdf(b) - 1) - 2.0, 0.1, 5.0)
        huber_aif = 1 / math.sqrt(2 * stats.norm.cdf(b) - 1)
        assert normal2.diagnostics["aif"] < huber_aif - 1e-3


class TestTabulated:
    def test_laplace_table(self):
        # kinks of the interpolated density must not leak into the residuals
        x = np.linspace(-8, 8, 801)
        d = D.tradeoff_location(tabulated(x, 0.5 * np.exp(-np.abs(x))), 2.0)
        res = D.kkt_residuals(d)
        assert res["normalization"] <= 1e-10
        assert D.kkt_ok(res)
        assert pop(d)[1] == pytest.approx(2.0, abs=1e-6)


class TestTradeoffScale:
    def test_exponential_residuals(self, exp_scale3):
        res = D.kkt_residuals(exp_scale3)
        assert res["slackness1"] <= 1e-6 and res["slackness2"] <= 1e-6
        assert pop(exp_scale3)[1] <= 3.0 + 1e-4
        assert res["normalization"] <= 1e-6

    def test_exponential_normalization(self, exp_scale3):
        val = expect(exponential(), lambda x: x * float(exp_scale3.gprime(x)), exp_scale3.breakpoints)
        assert val == pytest.approx(1.0, abs=1e-6)

    def test_beats_unconstrained_floor(self, exp_scale3):
        # the constrained optimum cannot beat the unconstrained minimum 1/sqrt(2)
        assert exp_scale3.diagnostics["aif"] >= 1 / math.sqrt(2)

    def test_normal_large_budget_limit(self):
        # psi' >= 0 removes x < 0, so the limit is 2x on x > 0 with AIF sqrt(2)
        d = D.tradeoff_scale(standard_normal(), 50.0)
        assert d.diagnostics["aif"] == pytest.approx(math.sqrt(2), abs=1e-2)
        x = np.linspace(0.1, 3, 10)
        assert np.allclose(d.gprime(x), 2 * x, rtol=1e-6)
        assert np.all(d.gprime(-np.linspace(0.1, 3, 10)) == 0)
        assert D.kkt_ok(D.kkt_residuals(d))

    def test_normal_small_budget_infeasible(self):
        with pytest.raises(InfeasibleBudgetError) as info:
            D.tradeoff_scale(standard_normal(), 2.0)
        assert info.value.min_feasible_xi > 2.0


@pytest.fixture(scope="module")
def rows():
    return D.tradeoff_curve(exponential(), [1.5, 2, 3, 5, 10, 50])


class TestCurve:
    def test_shape(self, rows):
        aif = np.array([r["aif"] for r in rows])
        assert np.all(aif >= 1 - 1e-12)
        assert np.all(np.diff(aif) <= 1e-12)
        assert aif[-1] <= 1.01

    def test_gamma_column_hits_budget(self, rows):
        for r in rows:
            assert r["gamma_star"] == pytest.approx(r["xi"], rel=1e-6)

    def test_row_matches_closed_form(self, rows):
        row = next(r for r in rows if r["xi"] == 3)
        assert row["aif"] == pytest.approx(pop(D.exponential_tradeoff(3.0))[0], abs=1e-6)

    def test_skipped_row(self):
        rows = D.tradeoff_curve(standard_normal(), [1.2, 2.0])
        assert rows[0]["skipped"] and "smallest feasible" in rows[0]["skipped"]
        assert rows[1]["skipped"] is None

    def test_grid_must_increase(self):
        with pytest.raises(InvalidParameterError):
            D.tradeoff_curve(exponential(), [3, 2])

    def test_csv(self, rows, tmp_path):
        path = tmp_path / "curve.csv"
        D.write_curve_csv(rows, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "xi,aif,gamma_star"
        assert len(lines) == 7


class TestDominance:
    @pytest.mark.parametrize("model", [standard_normal(), exponential()], ids=["normal", "exponential"])
    def test_larger_budget_never_worse(self, model):
        grid = [1.6, 2.2, 3.5, 8.0]
        vals = [D.tradeoff_location(model, xi).diagnostics["aif"] for xi in grid]
        assert all(a >= b - 1e-8 for a, b in zip(vals, vals[1:]))


class TestExport:
    def test_json_round_trip(self, exp3):
        back = D.DesignedPsi.from_json(exp3.to_json())
        x = np.linspace(-1, 6, 30)
        assert np.allclose(back.psi(x), exp3.psi(x), atol=1e-12)
        assert back.multipliers == exp3.multipliers

    def test_json_contents(self, normal2):
        d = json.loads(normal2.to_json())
        assert set(d) >= {"kind", "multipliers", "active_intervals", "pieces", "psi_neg_inf"}
        assert d["multipliers"]["theta1"] == pytest.approx(normal2.multipliers.theta1)

    def test_json_infinite_endpoints(self):
        d = D.min_aif_scale(standard_normal())
        back = D.DesignedPsi.from_json(d.to_json())
        assert back.active_region == ((-math.inf, math.inf),)
        assert back.psi_neg_inf == math.inf

    def test_sampled_csv(self, exp3, tmp_path):
        path = tmp_path / "psi.csv"
        D.write_psi_csv(exp3, path, n=101)
        rows = path.read_text().splitlines()
        assert rows[0] == "x,psi"
        vals = np.array([[float(v) for v in r.split(",")] for r in rows[1:]])
        assert len(vals) == 101
        assert np.all(np.diff(vals[:, 1]) >= -1e-12)
        assert vals[:, 1].min() == pytest.approx(-1.0, abs=1e-9)
        assert vals[:, 1].max() == pytest.approx(3.0, abs=1e-8)


class TestKkt:
    def test_residuals_of_fixtures(self, exp3, normal2, normal50, exp_scale3):
        for d in (exp3, normal2, normal50, exp_scale3):
            res = D.kkt_residuals(d)
            assert D.kkt_ok(res), res
            assert res["fisher_orders"] <= 1e-8

    def test_detects_bad_multipliers(self, exp3):
        bad = D.DesignedPsi(
            kind="location", form="tradeoff", model=exp3.model,
            multipliers=D.KktMultipliers(exp3.multipliers.nu * 1.01, exp3.multipliers.theta1, 0.0),
            active_region=exp3.active_region, psi_neg_inf=exp3.psi_neg_inf, xi=3.0,
            log_t1=exp3.log_t1,
        )
        assert not D.kkt_ok(D.kkt_residuals(bad))

    def test_negative_multiplier_rejected(self):
        with pytest.raises(InvalidParameterError):
            D.KktMultipliers(1.0, -0.1, 0.0)
