"""Convergence diagnostics on the five-dimensional example.

    python3 demos/03_diagnostics.py

Regime validation of a few schedules, the summability tails of a long run,
the energy inequality of the strong-convergence argument, and the
discrete geometric condition through the Fitzpatrick transform.
"""

import numpy as np

from bileq import Schedule, paper_r5, run, validate_regime
from bileq.algorithms import StepOptions
from bileq.diagnostics import (
    EnergyCheckContext,
    GeometricMonitor,
    energy_check_strong,
    fitzpatrick,
    normal_cone_element,
    summability_report,
)

prob = paper_r5()
ref_sched = Schedule(lambda n: 1 / n, lambda n: 1 + n, lambda n: 0.1 - 1 / n)

schedules = {
    "1/n, 1+n, 0.1-1/n": ref_sched,
    "1/n^2, n, 0": Schedule(lambda n: 1 / n ** 2, lambda n: n),
    "1/n, 5, 0": Schedule(lambda n: 1 / n, lambda n: 5.0),
    "n^-0.4, n^0.4, 0": Schedule(lambda n: n ** -0.4, lambda n: n ** 0.4),
}
for name, s in schedules.items():
    rep = validate_regime(s)
    print(f"{name:<20} -> {rep.regime.value}")
    for v in rep.violations:
        print(f"{'':<23}{v}")

# summability: tails over [N, 2N) should shrink as N doubles
tr = run(prob, "ipsa", ref_sched, 4096, track_residual=False)
rep = summability_report(tr, prob.x_ref, prob.f)
print("\nwindow   sum|x_{n+1}-x_n|^2   sum|z_{n+1}-x_n|^2")
for w, a, b in zip(rep.windows, rep.step_tails, rep.inner_tails):
    print(f"{w:>6}   {a:18.3e}   {b:18.3e}")
print("tails decreasing:", rep.passed)

# energy inequality with u = x_ref, b = 1 and the bound 0.1 on alpha_n
short = run(prob, "ipsa", ref_sched, 200, opts=StepOptions(inner_tol=1e-12), track_residual=False)
viol = energy_check_strong(EnergyCheckContext(prob.x_ref, 1.0, 0.1), short, prob.g)
print(f"\nenergy inequality: max violation {viol.max():.1e} over {len(viol)} steps")

# geometric condition at u = x_ref with p in the normal cone of S_f
u = prob.x_ref
p = normal_cone_element(prob.g, prob.S_f, u)
mon = GeometricMonitor(prob.f, prob.K, prob.S_f, u, p)
for n in range(1, 1001):
    mon.update(ref_sched.lam(n), ref_sched.beta(n))
print(f"geometric condition: partial sum {mon.partial_sum:.1e}, violations {mon.violated_at[:5]}")

# the Fitzpatrick transform of f: closed form against the sup estimator
x = np.array([0.5, 1.5, 0.0, -1.0, 0.3])
for r in (0.0, 0.5, 0.99, 1.2):
    q = np.full(5, r / np.sqrt(5))
    a = fitzpatrick(prob.f, prob.K, x, q)
    b = fitzpatrick(prob.f, prob.K, x, q, method="numeric")
    print(f"||u|| = {r:4.2f}: closed form {a: .10f}   estimator {b: .10f}")
