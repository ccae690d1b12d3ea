import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import ols_slope
from reference import ES_CASE1_12M_REL_ERRORS, ES_CASE1_VOLS, ES_STATIC_24M, MEAN_ERRORS
from sabrcal.analytics import static_implied_vol
from sabrcal.annealing import minimize
from sabrcal.calibration import (
    TECHNIQUE_I_SCHEDULE,
    CalibrationReport,
    Problem,
    QuoteRow,
    SurfaceSlice,
    VolSurface,
    aggregate_errors,
    calibrate_case2_T2,
    calibrate_dynamic_case1_T1,
    calibrate_formula,
    calibrate_static_T1,
    cost_individual,
    cost_joint,
    estimate_alpha_atm,
    estimate_beta_loglog,
    evaluate,
    mc_price_evaluator,
    vol_evaluator,
)
from sabrcal.errors import DomainError, ValidationError
from sabrcal.montecarlo import NormalBank, SimulationPlan
from sabrcal.params import CaseIIParams, StaticSabrParams

QUICK_T1 = TECHNIQUE_I_SCHEDULE.replace(cooling=0.8, chain_length=50)


def _market(surface, quantity="vol"):
    values = surface.market_values(quantity)
    return lambda strikes, i: values[i]


def _sub_surface(surface, index, fractions):
    s = surface.slices[index]
    pick = [int(np.argmin(np.abs(np.array(s.strikes) - f * surface.spot))) for f in fractions]
    return VolSurface(
        surface.spot, [SurfaceSlice(s.maturity, s.rate, s.dividend, [s.strikes[j] for j in pick], [s.vols[j] for j in pick])]
    )


def test_cost_zero_at_fit(es_surface):
    assert cost_individual(es_surface, 1, _market(es_surface)) == 0.0
    assert cost_joint(es_surface, _market(es_surface)) == 0.0
    assert cost_joint(es_surface, _market(es_surface, "price"), "price") == 0.0


def test_cost_uniform_one_percent(es_surface):
    vols = es_surface.market_values()
    c = cost_individual(es_surface, 0, lambda k, i: vols[i] * 1.01)
    assert c == pytest.approx(21e-4, rel=1e-12)


def test_cost_of_printed_12m_rows(es_surface):
    sub = _sub_surface(es_surface, 2, (0.88, 1.0, 1.12))
    printed = np.array([v for T, _, v in ES_CASE1_VOLS if T == 1.0]) / 100
    want = sum(e * e for e in ES_CASE1_12M_REL_ERRORS)
    # printed vols carry four decimals in vol points, the errors seven digits
    assert cost_individual(sub, 0, lambda k, i: printed) == pytest.approx(want, rel=1e-5)


def test_joint_is_sum_of_individual(es_surface, bundled_params):
    ev = vol_evaluator(bundled_params("bundled:eurostoxx50_case1"), es_surface)
    total = 0
    for i in range(4):
        total += cost_individual(es_surface, i, ev)
    assert cost_joint(es_surface, ev) == total


@settings(max_examples=30, deadline=None)
@given(scale=st.lists(st.floats(0.5, 1.5), min_size=21, max_size=21))
def test_cost_nonnegative_property(es_surface, scale):
    vols = es_surface.market_values()
    c = cost_individual(es_surface, 0, lambda k, i: vols[i] * np.array(scale))
    assert c >= 0.0
    assert (c == 0.0) == all(s == 1.0 for s in scale)


def test_cost_domain_errors(es_surface):
    with pytest.raises(DomainError):
        cost_individual(es_surface, 4, _market(es_surface))
    with pytest.raises(ValidationError):
        VolSurface(1.0, [SurfaceSlice(1.0, 0.0, 0.0, [1.0], [0.0])])


def test_evaluate_reference_case1_fit(es_surface, fx_surface, bundled_params):
    es = evaluate(es_surface, bundled_params("bundled:eurostoxx50_case1"))
    assert es.mean_rel_error == pytest.approx(MEAN_ERRORS[("eurostoxx50", "case1")], abs=5e-4)
    fx = evaluate(fx_surface, bundled_params("bundled:eurusd_case1"))
    assert fx.mean_rel_error == pytest.approx(MEAN_ERRORS[("eurusd", "case1")], abs=5e-4)
    assert fx.max_rel_error == pytest.approx(6.954307e-2, abs=5e-4)


def test_report_integrity(es_surface, bundled_params):
    r = evaluate(es_surface, bundled_params("bundled:eurostoxx50_case1"))
    errs = [abs(row.market - row.model) / row.market for row in r.rows]
    assert len(r.rows) == 84
    assert r.mean_rel_error == float(np.mean(errs)) and r.max_rel_error == max(errs)
    d = r.to_dict()
    assert d["mean_rel_error"] == r.mean_rel_error and len(d["rows"]) == 84
    assert r.cost == cost_joint(es_surface, vol_evaluator(r.params, es_surface))
    assert math.isnan(aggregate_errors([])[0])
    rows = [QuoteRow(1.0, 100.0, 0.2, 0.21), QuoteRow(1.0, 110.0, 0.2, 0.19)]
    rep = CalibrationReport("static", "T_I", "vol", StaticSabrParams(0.2, 1, 0.1, 0), 0.0, rows)
    assert rep.mean_rel_error == pytest.approx(0.05) and rep.max_rel_error == pytest.approx(0.05)


def test_synthetic_static_recovery():
    true = StaticSabrParams(0.25, 0.8, 0.6, -0.35)
    ks = np.linspace(80, 120, 21)
    surf = VolSurface(100.0, [SurfaceSlice(0.75, 0.0, 0.0, ks, static_implied_vol(true, ks, 100.0, 0.75))])
    r = calibrate_static_T1(surf, 0, schedule=QUICK_T1)
    # alpha and beta trade off almost exactly on one slice; only the fit is asserted
    assert r.max_rel_error < 1e-4


def test_static_24m_against_reference_fit(es_surface):
    ref = evaluate(VolSurface(es_surface.spot, (es_surface.slices[3],)), StaticSabrParams(**ES_STATIC_24M))
    r = calibrate_static_T1(es_surface, 3, schedule=QUICK_T1)
    assert r.mean_rel_error <= 1.5 * ref.mean_rel_error


def test_fixing_beta_and_alpha_leaves_nu_rho(es_surface):
    atm = es_surface.atm_vol(0)
    alpha = estimate_alpha_atm(1.0, es_surface.slices[0].forward(es_surface.spot), atm)
    fixed = {"beta": 1.0, "alpha": alpha}
    assert Problem("static", fixed, {}).free == ("nu", "rho")
    r = calibrate_static_T1(es_surface, 0, schedule=QUICK_T1.replace(max_evals=3000), fixed=fixed)
    assert r.params.beta == 1.0 and r.params.alpha == alpha
    assert r.fixed == fixed


def test_fixed_parameters_honored_in_dynamic_fit(es_surface):
    fixed = {"beta": 1.0, "a": 0.0}
    r = calibrate_dynamic_case1_T1(es_surface, schedule=QUICK_T1.replace(max_evals=2000), fixed=fixed)
    assert r.params.beta == 1.0 and r.params.a == 0.0
    assert r.evals <= 2000 + QUICK_T1.num_chains


def test_bounds_override_respected(es_surface):
    r = calibrate_formula(es_surface, "case1", bounds={"nu0": (0.2, 0.3)}, schedule=QUICK_T1.replace(max_evals=2000))
    assert 0.2 <= r.params.nu0 <= 0.3
    with pytest.raises(DomainError):
        Problem("case1", {}, {"nu0": (0.3, 0.2)})
    with pytest.raises(DomainError):
        Problem("case1", {"q_rho": 0.0}, {})


def test_calibration_is_seeded(es_surface):
    sched = QUICK_T1.replace(max_evals=1500, seed=5)
    a = calibrate_formula(es_surface, "case1", schedule=sched)
    b = calibrate_formula(es_surface, "case1", schedule=sched, max_workers=4)
    assert a.params == b.params and a.cost == b.cost and a.seed == 5


def test_technique2_objective_is_deterministic(fx_surface, bundled_params):
    p = bundled_params("bundled:eurusd_case2")
    plan = SimulationPlan(num_paths=2**12, block_size=2**11)
    bank = NormalBank(plan, 500)
    a = cost_joint(fx_surface, mc_price_evaluator(p, fx_surface, plan, bank), "price")
    b = cost_joint(fx_surface, mc_price_evaluator(p, fx_surface, plan), "price")
    c = cost_joint(fx_surface, mc_price_evaluator(p, fx_surface, plan.replace(workers=3), bank), "price")
    assert a == b == c


def test_technique2_short_run(fx_surface):
    plan = SimulationPlan(num_paths=2**11, block_size=2**11)
    start = dict(alpha=0.155, beta=1.0, rho0=-0.64, q_rho=0.0, d_rho=0.0, nu0=0.8, q_nu=0.0, d_nu=0.0, a=0.001, b=2.6)
    sched = QUICK_T1.replace(t0=0.01, max_evals=40, workers=4)
    r = calibrate_case2_T2(fx_surface, schedule=sched, plan=plan, fixed={"beta": 1.0}, start=start)
    assert r.quantity == "price" and r.technique == "T_II" and r.params.beta == 1.0
    assert r.evals <= 40 + 4
    start_report = evaluate(fx_surface, CaseIIParams(**start, horizon=2.0), "T_II", plan)
    # the start passes through the asinh search coordinates, which may move it by an ulp
    assert r.cost <= start_report.cost * (1 + 1e-12)


def test_technique2_rejects_infeasible_candidates(fx_surface):
    problem = Problem("case2", {"beta": 1.0}, {}, horizon=2.0)
    values = dict(alpha=0.15, rho0=-0.9, q_rho=0.0, d_rho=-0.5, nu0=0.8, q_nu=0.0, d_nu=0.0, a=1.0, b=1.0)
    assert not problem.feasible(problem.to_search([values[n] for n in problem.free]))
    space = problem.space()
    seen = []
    start = dict(values, d_rho=0.0)

    def objective(x):
        seen.append(x)
        return 0.0

    minimize(objective, space, QUICK_T1.replace(max_evals=300), problem.to_search([start[n] for n in problem.free]))
    assert all(problem.feasible(x) for x in seen)


def test_beta_exact_loglog():
    f = np.linspace(1500, 3000, 12)
    assert estimate_beta_loglog(np.column_stack([f, 0.4 * f ** (0.5 - 1)])) == pytest.approx(0.5, abs=1e-10)
    assert estimate_beta_loglog(np.column_stack([f, np.full_like(f, 0.25)])) == 1.0
    # clipped into [0, 1]
    assert estimate_beta_loglog(np.column_stack([f, 0.4 * f**0.5])) == 1.0
    assert estimate_beta_loglog(np.column_stack([f, 0.4 * f**-2.0])) == 0.0


def test_beta_noisy_against_normal_equations():
    rng = np.random.default_rng(42)
    f = rng.uniform(1000, 4000, 50)
    atm = 0.3 * f ** (0.7 - 1) * np.exp(0.01 * rng.standard_normal(50))
    got = estimate_beta_loglog(np.column_stack([f, atm]))
    assert got == pytest.approx(1 + ols_slope(np.log(f), np.log(atm)), abs=1e-10)
    assert abs(got - 0.7) < 0.05


def test_beta_degenerate():
    with pytest.raises(DomainError):
        estimate_beta_loglog([(100.0, 0.2), (100.0, 0.3)])
    with pytest.raises(DomainError):
        estimate_beta_loglog([(100.0, 0.2)])


def test_alpha_atm():
    assert estimate_alpha_atm(1.0, 2311.1, 0.29) == 0.29
    assert estimate_alpha_atm(0.0, 2000.0, 0.3) == pytest.approx(600.0, rel=1e-15)
    for beta in (0.0, 0.4, 1.0):
        f, atm = 1.3, 0.12
        alpha = estimate_alpha_atm(beta, f, atm)
        # ATM collapse with the B*T term neglected: sigma = alpha / f^(1 - beta)
        p = StaticSabrParams(alpha, beta, 0.0, 0.0)
        assert static_implied_vol(p, f, f, 1e-12) == pytest.approx(atm, rel=1e-12)
    with pytest.raises(DomainError):
        estimate_alpha_atm(1.0, -1.0, 0.2)
