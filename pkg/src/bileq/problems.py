"""Problem registry, reference-solution oracle and the JSON problem schema.

A problem bundles the constraint set K, the lower-level bifunction f, the
upper-level bifunction g, and optionally the lower-level solution set S_f
and a certified reference solution x_ref of the bilevel problem.

JSON problem definition (the ``problem`` field of a CLI config may hold
either a registry name or such an object)::

    {
      "K":   {"type": "whole", "dim": 5}
             | {"type": "ball", "center": [...], "radius": r}
             | {"type": "box", "lower": [...], "upper": [...]}
             | {"type": "halfspace", "normal": [...], "offset": b},
      "f":   bifunction,
      "g":   bifunction,
      "S_f": set (optional),
      "x0": [...], "x1": [...] (optional, default zeros / x0),
      "x_ref": [...] (optional; computed when S_f is given and g has
                      a diagonal subgradient)
    }

    bifunction := {"type": "affine", "A": [[...]], "B": [[...]], "c": [...]}
                | {"type": "difference", "phi": phi}
                | {"type": "zero"}
    phi := {"type": "max_one_norm"}
         | {"type": "shifted_quadratic", "center": [...], "scale": s}
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .bifunctions import (
    AffineBifunction,
    Bifunction,
    DifferenceBifunction,
    MaxOneNorm,
    ShiftedQuadratic,
    ZeroBifunction,
    check_monotone,
)
from .core import Ball, Box, ConvexSet, Halfspace, WholeSpace, as_vector, is_positive_semidefinite
from .diagnostics import ep_residual

__all__ = [
    "Problem",
    "ReferenceSolutionError",
    "R5_A",
    "R5_B",
    "paper_r5",
    "toy_1d",
    "quadratic_hierarchical",
    "reference_solution",
    "validate_problem",
    "REGISTRY",
    "get_problem",
    "problem_from_dict",
    "set_from_dict",
]

R5_A = np.array([
    [7, 3, 0, 1, 1],
    [3, 9, 1, 5, 4],
    [0, 1, 10, 3, -4],
    [1, 5, 3, 9, -1],
    [1, 4, -4, -1, 9],
], dtype=float)

R5_B = np.array([
    [5, 3, -1, 1, 2],
    [3, 6, 1, 4, 3],
    [-1, 1, 7, 2, -3],
    [1, 4, 2, 7, -2],
    [2, 3, -3, -2, 7],
], dtype=float)

for _m in (R5_A, R5_B):
    _m.setflags(write=False)


class ReferenceSolutionError(RuntimeError):
    pass


@dataclass(frozen=True)
class Problem:
    name: str
    K: ConvexSet
    f: Bifunction
    g: Bifunction
    x0: np.ndarray
    x1: np.ndarray
    S_f: ConvexSet | None = None
    x_ref: np.ndarray | None = None
    description: str = ""

    def __post_init__(self):
        d = self.K.dim
        for name in ("x0", "x1"):
            v = as_vector(getattr(self, name), d, name).copy()
            if not self.K.contains(v):
                raise ValueError(f"{name} is not in K")
            v.setflags(write=False)
            object.__setattr__(self, name, v)
        if self.x_ref is not None:
            v = as_vector(self.x_ref, d, "x_ref").copy()
            v.setflags(write=False)
            object.__setattr__(self, "x_ref", v)
        if self.f.dim != d or self.g.dim != d:
            raise ValueError("bifunction dimensions do not match K")


def reference_solution(problem: Problem, tol=1e-12, budget=200_000, candidate=None, seed=0):
    """Solve the upper-level problem over S_f by projected extragradient.

    The map is the diagonal subgradient of g restricted to S_f. When a
    `candidate` is supplied it is returned instead, provided it passes the
    same fixed-point and sampled certificates. The output x satisfies
    ``g(x, y) >= -10*tol`` on 256 sampled y in S_f, else
    :class:`ReferenceSolutionError` is raised.
    """
    S = problem.S_f
    if S is None:
        raise ValueError("problem has no known lower-level solution set")
    F = problem.g.diagonal_subgradient
    rng = np.random.default_rng(seed)

    # step from a sampled Lipschitz estimate of F on S_f
    pts = S.sample(rng, 32, scale=2.0)
    L = 0.0
    for u, v in zip(pts[::2], pts[1::2]):
        d = np.linalg.norm(u - v)
        if d > 0:
            L = max(L, np.linalg.norm(F(u) - F(v)) / d)
    tau = 0.5 / max(L, 1e-12)

    def fp_residual(x):
        return float(np.linalg.norm(x - S.project(x - tau * F(x))))

    x = None
    if candidate is not None:
        c = S.project(as_vector(candidate, S.dim, "candidate"))
        if fp_residual(c) <= tol:
            x = c
    if x is None:
        x = S.project(problem.x1)
        for _ in range(budget):
            if fp_residual(x) <= tol:
                break
            y = S.project(x - tau * F(x))
            x = S.project(x - tau * F(y))
        else:
            raise ReferenceSolutionError(f"no convergence in {budget} iterations")

    ys = S.sample(rng, 256, scale=2.0)
    worst = min(problem.g(x, y) for y in ys)
    if worst < -10 * tol:
        raise ReferenceSolutionError(f"certificate failed: min g(x, y) = {worst:.3e}")
    return x


def paper_r5() -> Problem:
    """The five-dimensional example: affine upper level, max(1, ||x||) lower level."""
    K = WholeSpace(5)
    f = DifferenceBifunction(MaxOneNorm(), 5)
    g = AffineBifunction(R5_A, R5_B)
    S_f = Ball(np.zeros(5), 1.0)
    ones = np.ones(5)
    base = Problem("paper-r5", K, f, g, ones, ones, S_f,
                   description="R^5, g(x,y) = <Ax + By, y - x>, f(x,y) = phi(y) - phi(x)")
    # 0 is the natural candidate only when g(0, y) = <By, y> >= 0
    candidate = np.zeros(5) if is_positive_semidefinite(R5_B) else None
    return replace(base, x_ref=reference_solution(base, candidate=candidate))


def toy_1d() -> Problem:
    """K = [-1, 1], f from phi(x) = x^2, g(x, y) = (x - 0.5)(y - x); solution 0."""
    K = Box([-1.0], [1.0])
    f = DifferenceBifunction(ShiftedQuadratic([0.0], scale=2.0), 1)
    g = AffineBifunction([[1.0]], [[0.0]], [-0.5])
    base = Problem("toy-1d", K, f, g, [1.0], [1.0], Box([0.0], [0.0]),
                   description="K = [-1, 1], phi(x) = x^2, g(x, y) = (x - 0.5)(y - x)")
    return replace(base, x_ref=reference_solution(base))


def quadratic_hierarchical(d=5, seed=0) -> Problem:
    """Random instance with S_f = {c}: phi = 0.5||x - c||^2, strongly monotone g."""
    if d < 1:
        raise ValueError("d must be >= 1")
    rng = np.random.default_rng(seed)
    c = rng.uniform(-1, 1, d)
    Q = rng.standard_normal((d, d))
    Bm = Q @ Q.T / d
    P = rng.standard_normal((d, d))
    A = Bm + P @ P.T / d + np.eye(d)
    f = DifferenceBifunction(ShiftedQuadratic(c), d)
    g = AffineBifunction(A, Bm, rng.standard_normal(d))
    x0 = c + rng.standard_normal(d)
    return Problem(f"quadratic-hierarchical-{d}-{seed}", WholeSpace(d), f, g, x0, x0,
                   Box(c, c), x_ref=c,
                   description="synthetic instance with closed-form solution")


REGISTRY = {
    "paper-r5": paper_r5,
    "toy-1d": toy_1d,
    "quadratic-hierarchical": quadratic_hierarchical,
}


def get_problem(name: str) -> Problem:
    try:
        return REGISTRY[name]()
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; known: {', '.join(sorted(REGISTRY))}") from None


def validate_problem(problem: Problem, samples=128, seed=0):
    """List the failed registry invariants (empty when the problem is sound)."""
    issues = []
    for name in ("f", "g"):
        rep = check_monotone(getattr(problem, name), problem.K, samples, seed)
        if not rep.passed:
            issues.append(f"{name} failed the sampled monotonicity check ({rep.max_sum:.3e})")
    if problem.x_ref is not None:
        r = ep_residual(problem.f, problem.K, problem.x_ref, seed)
        if r > 1e-6:
            issues.append(f"x_ref has lower-level residual {r:.3e}")
        if problem.S_f is not None:
            ys = problem.S_f.sample(np.random.default_rng(seed), samples, scale=2.0)
            worst = min(problem.g(problem.x_ref, y) for y in ys)
            if worst < -1e-6:
                issues.append(f"x_ref violates the upper-level problem ({worst:.3e})")
    return issues


# ---------------------------------------------------------------------------
# JSON schema


def set_from_dict(spec) -> ConvexSet:
    kind = spec.get("type")
    if kind == "whole":
        return WholeSpace(int(spec["dim"]))
    if kind == "ball":
        return Ball(spec["center"], spec["radius"])
    if kind == "box":
        return Box(spec["lower"], spec["upper"])
    if kind == "halfspace":
        return Halfspace(spec["normal"], spec["offset"])
    raise ValueError(f"unknown set type {kind!r}")


def _phi_from_dict(spec, dim):
    kind = spec.get("type")
    if kind == "max_one_norm":
        return MaxOneNorm()
    if kind == "shifted_quadratic":
        return ShiftedQuadratic(spec.get("center", np.zeros(dim)), spec.get("scale", 1.0))
    raise ValueError(f"unknown convex function type {kind!r}")


def _bifunction_from_dict(spec, dim):
    kind = spec.get("type")
    if kind == "affine":
        return AffineBifunction(spec["A"], spec["B"], spec.get("c"))
    if kind == "difference":
        return DifferenceBifunction(_phi_from_dict(spec["phi"], dim), dim)
    if kind == "zero":
        return ZeroBifunction(dim)
    raise ValueError(f"unknown bifunction type {kind!r}")


def problem_from_dict(spec, name="inline") -> Problem:
    """Build a problem from the JSON schema in the module docstring."""
    K = set_from_dict(spec["K"])
    d = K.dim
    f = _bifunction_from_dict(spec["f"], d)
    g = _bifunction_from_dict(spec["g"], d)
    S_f = set_from_dict(spec["S_f"]) if "S_f" in spec else None
    x0 = spec.get("x0", np.zeros(d))
    x1 = spec.get("x1", x0)
    prob = Problem(spec.get("name", name), K, f, g, x0, x1, S_f, spec.get("x_ref"))
    if prob.x_ref is None and S_f is not None:
        prob = replace(prob, x_ref=reference_solution(prob))
    return prob
