from dataclasses import replace

import numpy as np
import pytest

from bileq.algorithms import (
    ALPHA_LIMIT,
    ALPHA_MAX,
    Method,
    Regime,
    Schedule,
    SolverError,
    SolverState,
    StepOptions,
    StopRule,
    STEPS,
    initial_state,
    inertial_prox_step,
    ipsa_step,
    ppm_penalization_step,
    psm_step,
    rppm_step,
    run,
    validate_regime,
)
from bileq.bifunctions import AffineBifunction, ZeroBifunction, scaled
from bileq.core import WholeSpace
from bileq.problems import Problem, toy_1d
from bileq.resolvents import resolvent_residual

from oracles import M_R5, penalized_r5, radial_prox

REF_SCHEDULE = Schedule(lambda n: 1 / n, lambda n: 1 + n, lambda n: 0.1 - 1 / n)
NO_INERTIA = Schedule(lambda n: 1 / n, lambda n: 1 + n)
ONES = np.ones(5)


def state_at(n, x_prev, x_curr):
    return SolverState(n, np.asarray(x_prev, float), np.asarray(x_curr, float),
                       np.asarray(x_curr, float), np.asarray(x_curr, float))


def test_alpha_limit_value():
    assert ALPHA_LIMIT == pytest.approx(0.1830127018922193, abs=1e-15)
    assert ALPHA_MAX < ALPHA_LIMIT


def test_schedule_clamps_alpha():
    assert REF_SCHEDULE.alpha(1) == 0.0
    assert REF_SCHEDULE.alpha(20) == pytest.approx(0.05)
    s = Schedule(lambda n: 1.0, lambda n: 1.0, lambda n: 0.3)
    assert s.alpha(5) == ALPHA_MAX
    assert replace(s, clamp_alpha=False).alpha(5) == 0.3
    with pytest.raises(ValueError):
        Schedule(lambda n: -1.0, lambda n: 1.0).lam(1)
    with pytest.raises(ValueError):
        Schedule(lambda n: 1.0, lambda n: -1.0).beta(1)


def test_ipsa_single_step_against_hand_oracle(r5):
    sched = Schedule(lambda n: 0.5, lambda n: 3.0)
    new = ipsa_step(r5, state_at(2, ONES, ONES), sched)
    z = np.linalg.solve(np.eye(5) + 0.5 * M_R5, ONES)
    x = radial_prox(0.5 * 3.0, z)
    assert np.allclose(new.z_curr, z, atol=1e-12)
    assert np.allclose(new.x_curr, x, atol=1e-8)
    assert new.n == 3
    assert np.array_equal(new.x_prev, ONES)


def test_inertial_extrapolation_uses_previous_iterate(r5):
    sched = Schedule(lambda n: 0.5, lambda n: 3.0, lambda n: 0.1)
    prev, curr = np.zeros(5), ONES
    new = ipsa_step(r5, state_at(4, prev, curr), sched)
    assert np.allclose(new.y_curr, curr + 0.1 * (curr - prev))
    # equal previous and current iterates: no extrapolation at all
    same = ipsa_step(r5, state_at(4, curr, curr), sched)
    assert np.array_equal(same.y_curr, curr)


def test_psm_matches_ipsa_without_inertia(r5):
    st = initial_state(r5)
    a = ipsa_step(r5, st, NO_INERTIA)
    b = psm_step(r5, st, NO_INERTIA)
    assert np.array_equal(a.x_curr, b.x_curr)


def test_scheme_coincidence_over_a_run(r5):
    t1 = run(r5, "ipsa", NO_INERTIA, 100, track_residual=False)
    t2 = run(r5, "psm", NO_INERTIA, 100, track_residual=False)
    assert np.max(np.abs(t1.iterates() - t2.iterates())) <= 1e-12


def test_psm_trivial_problem_does_not_move():
    d = 3
    p = Problem("null", WholeSpace(d), ZeroBifunction(d), ZeroBifunction(d), [1.0, 2, 3], [1.0, 2, 3])
    new = psm_step(p, initial_state(p), NO_INERTIA)
    assert np.array_equal(new.x_curr, [1.0, 2, 3])


@pytest.mark.parametrize("step,wf_wg", [(inertial_prox_step, "beta,1"), (ppm_penalization_step, "beta,1"),
                                        (rppm_step, "1,beta")])
def test_penalized_single_steps_against_oracle(r5, step, wf_wg):
    sched = Schedule(lambda n: 1.0, lambda n: 2.0)
    new = step(r5, initial_state(r5), sched)
    beta = 2.0
    wf, wg = [beta if w == "beta" else 1.0 for w in wf_wg.split(",")]
    assert np.allclose(new.x_curr, penalized_r5(1.0, wf, wg, ONES), atol=1e-6)


def test_rppm_without_penalty_is_prox(r5):
    sched = Schedule(lambda n: 0.7, lambda n: 0.0)
    x = 3 * ONES
    new = rppm_step(r5, state_at(1, x, x), sched)
    assert np.allclose(new.x_curr, radial_prox(0.7, x), atol=1e-8)


@pytest.mark.parametrize("method", list(Method))
def test_stationary_at_reference(r5, method):
    p = replace(r5, x0=r5.x_ref, x1=r5.x_ref)
    tr = run(p, method, REF_SCHEDULE, 100, track_residual=False)
    assert np.max(np.linalg.norm(tr.iterates() - r5.x_ref, axis=1)) <= 10 * 1e-10


@pytest.mark.parametrize("method", list(Method))
def test_iterates_stay_feasible(method):
    p = toy_1d()
    tr = run(p, method, REF_SCHEDULE, 30, track_residual=False)
    for x, z in zip(tr.iterates()[1:], tr.inner_points()[1:]):
        assert p.K.contains(x) and p.K.contains(z)


@pytest.mark.parametrize("problem_name", ["r5", "toy"])
@pytest.mark.parametrize("method", list(Method))
def test_step_certificates(r5, problem_name, method):
    p = r5 if problem_name == "r5" else toy_1d()
    sched = Schedule(lambda n: 1 / n, lambda n: 1 + n, lambda n: 0.1)
    st = initial_state(p)
    for _ in range(5):
        n = st.n
        lam, beta = sched.lam(n), sched.beta(n)
        new = STEPS[method](p, st, sched, StepOptions())
        y = new.y_curr
        if method in (Method.IPSA, Method.PSM):
            assert resolvent_residual(p.g, p.K, lam, y, new.z_curr) <= 1e-8
            assert resolvent_residual(scaled(p.f, beta), p.K, lam, new.z_curr, new.x_curr) <= 1e-8
        else:
            wf, wg = (1.0, beta) if method is Method.RPPM else (beta, 1.0)
            h = p.f * wf + p.g * wg
            assert resolvent_residual(h, p.K, lam, y, new.x_curr) <= 1e-8
        st = new


def test_strongly_monotone_quadratic_converges_to_linear_solution(rng):
    d = 4
    Q = rng.standard_normal((d, d))
    A = Q @ Q.T / d + np.eye(d)
    B = np.diag(rng.uniform(0, 1, d))
    c = rng.standard_normal(d)
    g = AffineBifunction(A, B, c)
    p = Problem("quad", WholeSpace(d), ZeroBifunction(d), g, np.zeros(d), np.zeros(d))
    expect = np.linalg.solve(A + B, -c)
    for method in ("ipsa", "psm", "rppm"):
        tr = run(p, method, Schedule(lambda n: 1.0, lambda n: 1.0, lambda n: 0.1), 200,
                 reference=expect, track_residual=False)
        assert tr.final.err_to_ref <= 1e-6


def test_validate_regime_examples():
    rep = validate_regime(REF_SCHEDULE)
    assert rep.weak and rep.strong and rep.regime is Regime.STRONG
    rep = validate_regime(Schedule(lambda n: 1 / n ** 2, lambda n: n))
    assert not rep.weak
    assert any("sum lambda_n converges" in v for v in rep.weak_violations)
    assert rep.regime is Regime.NONE
    rep = validate_regime(Schedule(lambda n: 1 / n, lambda n: 1 + n, lambda n: 0.3))
    assert rep.regime is Regime.NONE
    assert any("0.1830" in v for v in rep.violations)


def test_validate_regime_weak_only_and_finite_beta():
    # bounded beta with lambda -> 0 gives liminf lambda*beta = 0: no regime
    rep = validate_regime(Schedule(lambda n: 1 / n, lambda n: 5.0))
    assert rep.regime is Regime.NONE
    rep = validate_regime(Schedule(lambda n: 1 / n ** 0.75, lambda n: n ** 0.75))
    assert rep.weak and rep.strong
    # lambda -> 0 but not square summable: strong hypotheses only
    rep = validate_regime(Schedule(lambda n: 1 / n ** 0.4, lambda n: n ** 0.4))
    assert not rep.weak and rep.strong
    with pytest.raises(ValueError):
        validate_regime(REF_SCHEDULE, horizon=10)


def test_run_budget_zero(r5):
    tr = run(r5, "ipsa", REF_SCHEDULE, 0)
    assert len(tr) == 1
    rec = tr.final
    assert rec.n == 1 and np.isnan(rec.lam)
    assert np.array_equal(rec.x, ONES)
    assert rec.err_to_ref == pytest.approx(np.sqrt(5))
    with pytest.raises(ValueError):
        run(r5, "ipsa", REF_SCHEDULE, -1)


def test_trace_conventions(r5):
    tr = run(r5, "ipsa", REF_SCHEDULE, 5)
    xs, zs = tr.iterates(), tr.inner_points()
    assert xs.shape == (7, 5) and zs.shape == (7, 5)
    assert np.array_equal(xs[0], r5.x0) and np.array_equal(xs[1], r5.x1)
    lam = tr.column("lambda")
    assert np.isnan(lam[0]) and lam[1] == 1.0 and lam[5] == 0.2
    assert tr.column("alpha")[5] == 0.0  # 0.1 - 1/5 < 0 is clamped
    # x_{n+1} = J^{beta_n f}(z_{n+1})
    assert np.allclose(xs[3], radial_prox(lam[2] * tr.column("beta")[2], zs[3]), atol=1e-8)
    psm = run(r5, "psm", REF_SCHEDULE, 3)
    assert np.all(psm.column("alpha")[1:] == 0.0)


def test_error_decreases_on_r5(r5):
    tr = run(r5, "ipsa", REF_SCHEDULE, 300, track_residual=False)
    err = tr.errors()
    assert err[-1] < err[1] * 1e-3
    assert np.all(np.isfinite(tr.iterates()))


def test_early_stop(r5):
    stop = StopRule(step_tol=1e-4, residual_tol=1e-12)
    tr = run(r5, "ipsa", REF_SCHEDULE, 10_000, stop=stop)
    assert len(tr) < 10_001
    assert tr.final.step_norm < 1e-4 and tr.final.ep_residual < 1e-12
    tr = run(r5, "ipsa", REF_SCHEDULE, 50, stop=StopRule(max_iters=7))
    assert len(tr) == 8


def test_step_failure_keeps_partial_trace(r5):
    bad = Schedule(lambda n: 1.0 if n < 4 else -1.0, lambda n: 1.0)
    with pytest.raises(SolverError) as info:
        run(r5, "psm", bad, 10)
    assert len(info.value.trace) == 4


def test_callback_sees_every_state(r5):
    seen = []
    run(r5, "psm", REF_SCHEDULE, 6, callback=lambda s: seen.append(s.n), track_residual=False)
    assert seen == [2, 3, 4, 5, 6, 7]
