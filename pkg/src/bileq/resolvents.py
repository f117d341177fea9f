"""Resolvents J_lam^h(x) of monotone equilibrium bifunctions.

``J_lam^h(x)`` is the unique ``z`` in ``K`` with

    lam * h(z, y) + <y - z, z - x> >= 0    for every y in K.

Three routes, tried in order: a closed-form prox (difference bifunctions),
one dense linear solve (affine bifunctions on the whole space), and an
iterative splitting solver for everything else.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bifunctions import (
    AffineBifunction,
    Bifunction,
    CombinedBifunction,
    DifferenceBifunction,
    MaxOneNorm,
    MissingCapabilityError,
    ResolventStrategy,
    ZeroBifunction,
)
from .core import ConvexSet, WholeSpace, as_vector, solve_linear

__all__ = [
    "ResolventBudgetError",
    "ResolventRequest",
    "prox_max_one_norm",
    "resolvent_affine",
    "resolvent_difference",
    "resolvent_generic",
    "resolvent",
    "resolvent_residual",
    "DEFAULT_INNER_TOL",
    "DEFAULT_INNER_BUDGET",
]

DEFAULT_INNER_TOL = 1e-10
DEFAULT_INNER_BUDGET = 100_000

_MAX_ONE_NORM = MaxOneNorm()


class ResolventBudgetError(RuntimeError):
    """Inner solver ran out of iterations; carries its best iterate."""

    def __init__(self, best, residual, iterations):
        super().__init__(
            f"resolvent did not reach tolerance in {iterations} iterations "
            f"(best fixed-point residual {residual:.3e})"
        )
        self.best = best
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class ResolventRequest:
    bifunction: Bifunction
    K: ConvexSet
    lam: float
    anchor: np.ndarray
    inner_tol: float = DEFAULT_INNER_TOL
    inner_budget: int = DEFAULT_INNER_BUDGET
    seed: int = 0

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lam must be positive")
        if not self.inner_tol > 0:
            raise ValueError("inner_tol must be positive")
        object.__setattr__(self, "anchor", as_vector(self.anchor, self.K.dim, "anchor"))


def prox_max_one_norm(t, w):
    """Prox of t*max(1, ||.||) at w.

    Identity inside the unit ball, radial projection onto the sphere while
    ||w|| <= 1 + t, and a shrink of length t beyond that.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    return _MAX_ONE_NORM.prox(t, as_vector(w, name="w"))


def resolvent_affine(g: AffineBifunction, lam, x):
    """Solve (I + lam (A + B)) z = x - lam c (unconstrained K)."""
    if isinstance(g, CombinedBifunction):
        g = g.as_affine()
    x = as_vector(x, g.dim)
    M = np.eye(g.dim) + lam * g.jacobian
    return solve_linear(M, x - lam * g.c)


def resolvent_difference(f, lam, x):
    """prox of lam*phi at x; the resolvent of f(x, y) = phi(y) - phi(x)."""
    if not hasattr(f, "prox"):
        raise MissingCapabilityError(f"{type(f).__name__} has no prox")
    return f.prox(lam, as_vector(x, f.dim))


# ---------------------------------------------------------------------------
# iterative route


def _flatten(h, weight=1.0):
    if isinstance(h, CombinedBifunction):
        for w, t in h.terms:
            yield from _flatten(t, weight * w)
    else:
        yield weight, h


class _Backward:
    """Prox of sum_i w_i phi_i + indicator(K), scaled by a step."""

    def __init__(self, prox_terms, K):
        self.terms = prox_terms
        self.K = K
        self.trivial_set = isinstance(K, WholeSpace)

    def __call__(self, tau, v):
        ops = [(lambda u, a=a, h=h: h.prox(tau * a, u)) for a, h in self.terms]
        if not self.trivial_set:
            ops.append(self.K.project)
        if not ops:
            return v.copy()
        out = ops[0] if len(ops) == 1 else _dykstra_chain(ops)
        return out(v)


def _dykstra_chain(ops, tol=1e-14, budget=10_000):
    # prox of a sum by nested Dykstra-like alternation (Bauschke-Combettes)
    first, rest = ops[0], ops[1:]
    second = rest[0] if len(rest) == 1 else _dykstra_chain(rest, tol, budget)

    def prox_sum(v):
        x = v.copy()
        p = np.zeros_like(v)
        q = np.zeros_like(v)
        for _ in range(budget):
            y = second(x + p)
            p = x + p - y
            x_new = first(y + q)
            q = y + q - x_new
            if np.linalg.norm(x_new - x) <= tol * (1 + np.linalg.norm(x)):
                return x_new
            x = x_new
        return x

    return prox_sum


def _lipschitz_estimate(op, center, rng, samples=16):
    est = 0.0
    scale = 1.0 + np.linalg.norm(center)
    for _ in range(samples):
        u = center + scale * rng.standard_normal(center.shape)
        v = center + scale * rng.standard_normal(center.shape)
        d = np.linalg.norm(u - v)
        if d > 0:
            est = max(est, np.linalg.norm(op(u) - op(v)) / d)
    return est


def resolvent_generic(req: ResolventRequest):
    """Iterative resolvent for sums of prox-able, affine and smooth terms.

    The inclusion ``0 in z - x + lam*sum(A^{h_i}(z)) + N_K(z)`` is split into
    a forward part (identity shift plus affine and subgradient-only terms,
    1-strongly monotone) and a backward part (prox-able terms plus the set).
    When the forward part is affine, Douglas-Rachford is run with the linear
    part resolved exactly; otherwise Tseng's forward-backward-forward method
    with step ``0.9 / (1 + lam*L)``, ``L`` a sampled Lipschitz estimate.

    Termination is on the fixed-point residual ``||w_k - z_k||``.
    """
    x, lam, K, d = req.anchor, float(req.lam), req.K, req.K.dim
    M = np.zeros((d, d))
    c = np.zeros(d)
    prox_terms, smooth_terms = [], []
    for w, h in _flatten(req.bifunction):
        if w == 0 or isinstance(h, ZeroBifunction):
            continue
        if isinstance(h, AffineBifunction):
            M += w * h.jacobian
            c += w * h.c
        elif hasattr(h, "prox") and h.strategy == ResolventStrategy.CLOSED_FORM_PROX:
            prox_terms.append((lam * w, h))
        else:
            smooth_terms.append((w, h))
    backward = _Backward(prox_terms, K)

    if not smooth_terms:
        z = _douglas_rachford(x, lam, M, c, backward, req)
    else:
        z = _tseng(x, lam, M, c, smooth_terms, backward, req)
    return z


def _douglas_rachford(x, lam, M, c, backward, req):
    d = x.shape[0]
    L = 1.0 + lam * np.linalg.norm(M, 2)
    gamma = 1.0 / np.sqrt(L)
    # resolvent of gamma*P with P(z) = (I + lam M) z - x + lam c
    R = solve_linear(np.eye(d) * (1.0 + gamma) + gamma * lam * M, np.eye(d))
    shift = gamma * (x - lam * c)
    s = x.copy()
    best, best_res = None, np.inf
    for k in range(1, req.inner_budget + 1):
        z = R @ (s + shift)
        w = backward(gamma, 2.0 * z - s)
        res = float(np.linalg.norm(w - z))
        if res < best_res:
            best, best_res = w, res
        if res <= req.inner_tol:
            return w
        s = s + (w - z)
    raise ResolventBudgetError(best, best_res, req.inner_budget)


def _tseng(x, lam, M, c, smooth_terms, backward, req):
    def F(z):
        out = z - x + lam * (M @ z + c)
        for w, h in smooth_terms:
            out += lam * w * h.diagonal_subgradient(z)
        return out

    rng = np.random.default_rng(req.seed)
    L = 1.0 + _lipschitz_estimate(lambda z: F(z) - z + x, x, rng)
    tau = 0.9 / L
    z = req.K.project(x)
    best, best_res = z, np.inf
    for k in range(1, req.inner_budget + 1):
        Fz = F(z)
        w = backward(tau, z - tau * Fz)
        res = float(np.linalg.norm(w - z))
        if res < best_res:
            best, best_res = w, res
        if res <= req.inner_tol:
            return w
        z_new = w - tau * (F(w) - Fz)
        z = z_new if backward.trivial_set else req.K.project(z_new)
    raise ResolventBudgetError(best, best_res, req.inner_budget)


# ---------------------------------------------------------------------------
# dispatch


def resolvent(h: Bifunction, K: ConvexSet, lam, x, inner_tol=DEFAULT_INNER_TOL,
              inner_budget=DEFAULT_INNER_BUDGET, seed=0):
    """J_lam^h(x) on K by the cheapest valid route."""
    if not lam > 0:
        raise ValueError("lam must be positive")
    x = as_vector(x, K.dim)
    whole = isinstance(K, WholeSpace)
    strategy = h.strategy
    if whole and strategy == ResolventStrategy.CLOSED_FORM_PROX:
        return h.prox(lam, x)
    if whole and strategy == ResolventStrategy.AFFINE_LINEAR_SOLVE:
        return resolvent_affine(h, lam, x)
    if not whole and strategy == ResolventStrategy.CLOSED_FORM_PROX and _is_zero(h):
        return K.project(x)
    req = ResolventRequest(h, K, lam, x, inner_tol, inner_budget, seed)
    return resolvent_generic(req)


def _is_zero(h):
    return all(w == 0 or isinstance(t, ZeroBifunction) for w, t in _flatten(h))


def resolvent_residual(h: Bifunction, K: ConvexSet, lam, x, z, samples=32, seed=0, scale=None):
    """Worst sampled violation of lam*h(z, y) + <y - z, z - x> >= 0.

    Test points are drawn in K around `z`, half of them very close to it, and
    also include `x` projected on K. Returns max(0, worst violation).
    """
    rng = np.random.default_rng(seed)
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    if scale is None:
        scale = 1.0 + np.linalg.norm(z)
    n_near = samples // 2
    pts = [K.project(z + 1e-3 * scale * rng.standard_normal(z.shape)) for _ in range(n_near)]
    pts += [K.project(p) for p in K.sample(rng, samples - n_near, scale=scale, around=z)]
    pts.append(K.project(x))
    worst = 0.0
    for y in pts:
        val = lam * h(z, y) + (y - z) @ (z - x)
        worst = max(worst, -float(val))
    return worst
