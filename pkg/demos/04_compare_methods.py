"""All five methods on a problem defined in JSON, and on the toy problem.

    python3 demos/04_compare_methods.py

The JSON problem puts a box constraint around a strongly monotone upper
level whose lower-level solution set is a single point, so every method
has to be pulled to that point by the penalization.

RPPM weights the upper level by beta_n instead of the lower level, so it
needs beta_n -> 0; it gets lambda_n = 1, beta_n = 1/n. Run with the
penalization schedule of the other four it stalls at the minimiser of
f + (1 + n) g over K, as the last row shows.
"""

import time

import numpy as np

from bileq import Method, Schedule, run
from bileq.problems import problem_from_dict, toy_1d

spec = {
    "name": "boxed-quadratic",
    "K": {"type": "box", "lower": [-2, -2, -2], "upper": [2, 2, 2]},
    "f": {"type": "difference", "phi": {"type": "shifted_quadratic", "center": [0.5, -0.5, 1.0]}},
    "g": {"type": "affine",
          "A": [[3, 1, 0], [1, 3, 1], [0, 1, 3]],
          "B": [[1, 0, 0], [0, 1, 0], [0, 0, 1]],
          "c": [1, -2, 0.5]},
    "S_f": {"type": "box", "lower": [0.5, -0.5, 1.0], "upper": [0.5, -0.5, 1.0]},
    "x0": [2, 2, 2],
}
sched = Schedule(lambda n: 1 / n, lambda n: 1 + n, lambda n: 0.1 - 1 / n)
regularized = Schedule(lambda n: 1.0, lambda n: 1 / n)

for prob in (problem_from_dict(spec), toy_1d()):
    print(f"\n{prob.name}: x_ref = {np.round(prob.x_ref, 6)}")
    print(f"{'method':<18} {'err n=10':>10} {'err n=100':>10} {'err n=1000':>11} {'time':>7}")
    runs = [(m.value, m, regularized if m is Method.RPPM else sched) for m in Method]
    runs.append(("rppm (1/n, 1+n)", Method.RPPM, sched))
    for label, m, s in runs:
        t0 = time.perf_counter()
        tr = run(prob, m, s, 1000, track_residual=False)
        dt = time.perf_counter() - t0
        e = tr.errors()
        print(f"{label:<18} {e[9]:10.2e} {e[99]:10.2e} {e[999]:11.2e} {dt:6.2f}s")
