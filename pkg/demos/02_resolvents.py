"""The resolvent engine: which route is used and how the routes compare.

    python3 demos/02_resolvents.py
"""

import time

import numpy as np

from bileq import Ball, WholeSpace, paper_r5, resolvent
from bileq.resolvents import ResolventRequest, resolvent_generic, resolvent_residual

prob = paper_r5()
f, g, K = prob.f, prob.g, prob.K
x = np.array([3.0, -1.0, 0.5, 2.0, 0.0])

cases = [
    ("f (prox of max(1, ||.||))", f, K),
    ("g (affine, linear solve)", g, K),
    ("2 f + g (iterative)", f * 2.0 + g, K),
    ("f + g on a ball (iterative)", f * 1.0 + g, Ball(np.ones(5), 1.5)),
]
print(f"{'bifunction':<30} {'strategy':<20} {'time':>9}  {'residual':>9}  z")
for name, h, S in cases:
    t0 = time.perf_counter()
    z = resolvent(h, S, 1.0, x)
    dt = time.perf_counter() - t0
    res = resolvent_residual(h, S, 1.0, x, z)
    print(f"{name:<30} {h.strategy.name:<20} {dt * 1e3:7.2f}ms  {res:9.1e}  {np.round(z, 5)}")

# forcing the iterative route on an affine bifunction reproduces the solve
direct = resolvent(g, K, 0.5, x)
iterative = resolvent_generic(ResolventRequest(g, WholeSpace(5), 0.5, x))
print(f"\naffine: direct vs iterative differ by {np.max(np.abs(direct - iterative)):.1e}")

# fixed points of J^f are exactly the solutions of the lower level
rng = np.random.default_rng(0)
for r in (0.5, 1.0, 1.5, 3.0):
    v = rng.standard_normal(5)
    v *= r / np.linalg.norm(v)
    print(f"||x|| = {r:3.1f}: ||J(x) - x|| = {np.linalg.norm(resolvent(f, K, 1.0, v) - v):.3e}")
