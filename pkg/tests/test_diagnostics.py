from dataclasses import replace

import numpy as np
import pytest

from bileq.algorithms import Schedule, StepOptions, run
from bileq.bifunctions import CallableBifunction, ZeroBifunction
from bileq.core import Ball, WholeSpace
from bileq.diagnostics import (
    EnergyCheckContext,
    GeometricMonitor,
    WindowConstantError,
    energy_check_strong,
    ep_residual,
    fitzpatrick,
    geometric_condition_summand,
    maximize_over,
    minty_residual,
    normal_cone_element,
    summability_report,
)
from bileq.problems import paper_r5, toy_1d

REF_SCHEDULE = Schedule(lambda n: 1 / n, lambda n: 1 + n, lambda n: 0.1 - 1 / n)
E = np.eye(5)


@pytest.fixture(scope="module")
def p():
    return paper_r5()


@pytest.fixture(scope="module")
def opaque_f(p):
    # same values as f, but no closed forms: forces the estimator
    return CallableBifunction(p.f, 5)


def test_ep_residual_examples(p, opaque_f):
    assert ep_residual(p.f, p.K, np.zeros(5)) == 0.0
    assert ep_residual(p.f, p.K, 2 * E[0]) == pytest.approx(1.0, abs=1e-12)
    assert ep_residual(ZeroBifunction(5), p.K, 3 * E[1]) == 0.0
    assert ep_residual(opaque_f, p.K, 2 * E[0]) == pytest.approx(1.0, abs=1e-6)
    assert ep_residual(opaque_f, p.K, 0.5 * E[3]) == pytest.approx(0.0, abs=1e-6)


def test_minty_residual_examples(p, opaque_f):
    assert minty_residual(p.f, p.K, np.zeros(5)) == 0.0
    assert minty_residual(p.f, p.K, 2 * E[0]) == pytest.approx(1.0, abs=1e-12)
    assert minty_residual(opaque_f, p.K, 2 * E[0]) == pytest.approx(1.0, abs=1e-6)


def test_monotone_consistency(p, opaque_f, rng):
    # minty residual zero implies EP residual zero for these monotone built-ins
    for x in Ball(np.zeros(5), 1.0).sample(rng, 5):
        assert minty_residual(opaque_f, p.K, x) <= 1e-6
        assert ep_residual(opaque_f, p.K, x) <= 1e-6


def test_residuals_vanish_at_reference(p):
    for prob in (p, toy_1d()):
        assert ep_residual(prob.f, prob.K, prob.x_ref) <= 1e-6
        assert minty_residual(prob.f, prob.K, prob.x_ref) <= 1e-6


def test_fitzpatrick_examples(p):
    x = np.array([1.0, 2.0, 0.0, 0.0, 2.0])
    assert fitzpatrick(p.f, p.K, x, np.zeros(5)) == pytest.approx(-1 + 3.0)
    assert fitzpatrick(p.f, p.K, np.zeros(5), np.zeros(5)) == 0.0
    assert fitzpatrick(p.f, p.K, x, 1.1 * E[0]) == np.inf
    assert fitzpatrick(p.f, p.K, x, 1.1 * E[0], method="numeric") == np.inf
    B = Ball(np.zeros(5), 1.0)
    u = np.array([0.3, -0.4, 0.0, 1.2, 0.0])
    assert fitzpatrick(ZeroBifunction(5), B, x, u) == pytest.approx(np.linalg.norm(u))
    assert fitzpatrick(ZeroBifunction(5), B, x, u, method="numeric") == pytest.approx(np.linalg.norm(u), abs=1e-6)
    with pytest.raises(ValueError):
        fitzpatrick(p.f, p.K, x, u, method="bogus")


def test_fitzpatrick_grid_oracle_at_zero(p):
    # u = 0, x = 0: sup over a radial grid of -phi(y) + phi(0) is 0
    grid = np.linspace(0, 3, 301)
    best = max(-max(1.0, s) + 1.0 for s in grid)
    assert fitzpatrick(p.f, p.K, np.zeros(5), np.zeros(5), method="numeric") == pytest.approx(best, abs=1e-6)


def test_fitzpatrick_lower_bound(p, rng):
    for _ in range(30):
        x = rng.standard_normal(5) * 2
        u = rng.standard_normal(5)
        u *= rng.uniform(0, 1.5) / np.linalg.norm(u)
        F = fitzpatrick(p.f, p.K, x, u)
        if np.isfinite(F):
            assert F >= u @ x - 1e-12


def test_fitzpatrick_estimator_matches_closed_form(p, rng):
    for i in range(10):
        x = rng.standard_normal(5) * rng.uniform(0, 2)
        u = rng.standard_normal(5)
        u *= rng.uniform(0, 0.95) / np.linalg.norm(u)
        exact = fitzpatrick(p.f, p.K, x, u)
        assert fitzpatrick(p.f, p.K, x, u, method="numeric", seed=i) == pytest.approx(exact, abs=1e-6)


def test_maximize_over_detects_unbounded():
    assert maximize_over(lambda y: float(y @ np.ones(3)), WholeSpace(3), np.zeros(3)) == np.inf


def test_summand_examples(p):
    u = np.zeros(5)
    beta = 4.0
    pvec = np.array([1.0, 0.5, 0, 0, 0])    # ||2p/beta|| < 1
    assert geometric_condition_summand(p.f, p.K, p.S_f, u, pvec, 0.5, beta) == pytest.approx(0.0, abs=1e-12)
    assert geometric_condition_summand(p.f, p.K, p.S_f, 0.6 * E[2], np.zeros(5), 0.5, beta) == 0.0
    assert geometric_condition_summand(p.f, p.K, p.S_f, u, pvec, 0.5, 1.0) == np.inf


def test_summand_nonnegative_on_solution_set(p, rng):
    for u in p.S_f.sample(rng, 20):
        for q in rng.standard_normal((3, 5)):
            s = geometric_condition_summand(p.f, p.K, p.S_f, u, q, 0.3, 7.0)
            assert s == np.inf or s >= -1e-8


def test_normal_cone_element_vanishes_on_r5(p, rng):
    # A + B is positive definite, so the projected -grad is 0 even on the sphere
    for u in rng.standard_normal((10, 5)):
        u /= np.linalg.norm(u)
        assert np.array_equal(normal_cone_element(p.g, p.S_f, u), np.zeros(5))
    assert np.array_equal(normal_cone_element(p.g, p.S_f, np.zeros(5)), np.zeros(5))


def test_normal_cone_element_on_boundary():
    prob = toy_1d()
    # S_f = {0}; -grad g(0) = 0.5 lies in the (whole-line) normal cone
    assert normal_cone_element(prob.g, prob.S_f, np.zeros(1)) == pytest.approx([0.5])


def test_geometric_monitor(p):
    mon = GeometricMonitor(p.f, p.K, p.S_f, np.zeros(5), np.zeros(5))
    for n in range(1, 30):
        mon.update(REF_SCHEDULE.lam(n), REF_SCHEDULE.beta(n))
    assert mon.partial_sum == 0.0 and mon.violated_at == []
    mon = GeometricMonitor(p.f, p.K, p.S_f, np.zeros(5), np.full(5, 2.0))
    mon.update(1.0, 1.0)
    assert mon.violated_at == [0]


def test_energy_window():
    with pytest.raises(WindowConstantError):
        EnergyCheckContext(np.zeros(5), 0.1, 0.1)   # b <= 2 alpha
    with pytest.raises(WindowConstantError):
        EnergyCheckContext(np.zeros(5), 2.0, 0.1)   # b >= 1/(4 alpha) - 1
    with pytest.raises(WindowConstantError):
        EnergyCheckContext(np.zeros(5), -1.0, 0.0)
    EnergyCheckContext(np.zeros(5), 1.0, 0.1)


def test_energy_stationary_run(p):
    still = replace(p, x0=p.x_ref, x1=p.x_ref)
    tr = run(still, "ipsa", REF_SCHEDULE, 30, track_residual=False)
    viol = energy_check_strong(EnergyCheckContext(p.x_ref, 1.0, 0.1), tr, p.g)
    # steps n = 1..29: the last needs alpha_{n+1} of step 30
    assert len(viol) == 29 and np.all(viol == 0.0)


def test_energy_inequality_psm(p):
    tr = run(p, "psm", REF_SCHEDULE, 200, track_residual=False)
    viol = energy_check_strong(EnergyCheckContext(p.x_ref, 1.0, 0.0), tr, p.g)
    assert viol.max() <= 1e-6


def test_energy_inequality_ipsa(p):
    tr = run(p, "ipsa", REF_SCHEDULE, 200, opts=StepOptions(inner_tol=1e-12), track_residual=False)
    viol = energy_check_strong(EnergyCheckContext(p.x_ref, 1.0, 0.1), tr, p.g)
    assert viol.max() <= 1e-6


def test_summability_constant_trace(p):
    still = replace(p, x0=p.x_ref, x1=p.x_ref)
    rep = summability_report(run(still, "psm", REF_SCHEDULE, 128, track_residual=False), p.x_ref, p.f)
    assert rep.passed
    assert all(t == 0 for t in rep.step_tails + rep.inner_tails + rep.lower_tails)


def test_summability_r5_run(p):
    tr = run(p, "ipsa", REF_SCHEDULE, 1024, track_residual=False)
    rep = summability_report(tr, p.x_ref, p.f)
    assert rep.windows == (16, 32, 64, 128, 256, 512)
    assert rep.step_decreasing and rep.inner_decreasing


def test_summability_bad_schedule_reports_only(p):
    bad = Schedule(lambda n: 1.0, lambda n: 1.0, lambda n: 0.3, clamp_alpha=False)
    rep = summability_report(run(p, "ipsa", bad, 128, track_residual=False))
    assert isinstance(rep.passed, bool)


def test_summability_needs_length(p):
    with pytest.raises(ValueError):
        summability_report(run(p, "psm", REF_SCHEDULE, 10, track_residual=False))
