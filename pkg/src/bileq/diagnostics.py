"""Equilibrium residuals, the Fitzpatrick-transform monitor, energy checks.

Suprema over K are computed in closed form when the bifunction exposes
one, otherwise estimated by :func:`maximize_over` (multistart projected
ascent followed by a Nelder-Mead polish).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.optimize

from .bifunctions import (
    Bifunction,
    CombinedBifunction,
    DifferenceBifunction,
    MissingCapabilityError,
    ZeroBifunction,
)
from .core import ConvexSet, WholeSpace, as_vector

__all__ = [
    "maximize_over",
    "ep_residual",
    "minty_residual",
    "fitzpatrick",
    "geometric_condition_summand",
    "normal_cone_element",
    "GeometricMonitor",
    "WindowConstantError",
    "EnergyCheckContext",
    "energy_check_strong",
    "SummabilityReport",
    "summability_report",
]

_STARTS = 8
_ASCENT_STEPS = 500
_UNBOUNDED = 1e8
_POLISH_ITERS = 400


def _fd_grad(fun, y, f0):
    # forward differences: d + 1 evaluations
    h = 1e-8 * (1.0 + np.linalg.norm(y))
    g = np.empty_like(y)
    for i in range(y.shape[0]):
        e = np.zeros_like(y)
        e[i] = h
        g[i] = (fun(y + e) - f0) / h
    return g


def _ascend(fun, K, y, steps, cap):
    val = fun(y)
    step = 1.0
    stalls = 0
    for _ in range(steps):
        if val > cap:
            return y, np.inf
        g = _fd_grad(fun, y, val)
        gn = np.linalg.norm(g)
        if gn < 1e-14:
            break
        while step > 1e-14:
            cand = K.project(y + step * g / gn)
            cv = fun(cand)
            if cv > val:
                stalls = stalls + 1 if cv - val < 1e-12 * (1.0 + abs(val)) else 0
                y, val = cand, cv
                step *= 2.0
                break
            step *= 0.5
        else:
            break
        if stalls >= 5:
            break
    return y, val


def _min_norm_hull(G):
    """Shortest vector in the convex hull of the rows of G (NNLS with a
    heavily weighted sum-to-one row)."""
    m, d = G.shape
    M = 1e4
    rhs = np.zeros(d + 1)
    rhs[-1] = M
    w, _ = scipy.optimize.nnls(np.vstack([G.T, np.full(m, M)]), rhs)
    return G.T @ (w / w.sum())


def _gradient_sampling(fun, y, eps, rng, eps_min=1e-9, iters=_POLISH_ITERS):
    """Local maximization of a Lipschitz, possibly nonsmooth `fun`.

    Each step moves along the shortest element of the convex hull of
    gradients sampled in an eps-box around y; eps shrinks by 10 whenever
    that element vanishes or the line search fails.
    """
    d = y.shape[0]
    fy = fun(y)
    for _ in range(iters):
        pts = np.vstack([y, y + eps * rng.uniform(-1.0, 1.0, (d + 1, d))])
        G = np.array([_fd_grad(fun, q, fun(q)) for q in pts])
        g = _min_norm_hull(G)
        gn = np.linalg.norm(g)
        moved = False
        if gn > 1e-10:
            t = 10.0 * eps
            while t > 1e-15:
                c = y + t * g / gn
                fc = fun(c)
                if fc > fy + 1e-8 * t * gn:
                    y, fy, moved = c, fc, True
                    break
                t *= 0.5
        if not moved:
            eps *= 0.1
            if eps < eps_min:
                break
    return y, fy


def maximize_over(fun, K: ConvexSet, center, seed=0, starts=_STARTS, steps=_ASCENT_STEPS):
    """Estimate sup over y in K of fun(y); ``inf`` when the search diverges.

    Starts from ``P_K(center)`` plus ``starts - 1`` random points drawn in K
    around it and runs projected ascent with finite-difference gradients.
    The best point is then polished by gradient sampling on
    ``fun(P_K(y)) - ||y - P_K(y)||^2``, which copes with the kinks that
    stall plain ascent.
    """
    rng = np.random.default_rng(seed)
    center = K.project(as_vector(center, K.dim, "center"))
    scale = 1.0 + np.linalg.norm(center)
    inits = [center] + [K.project(p) for p in K.sample(rng, starts - 1, scale=scale, around=center)]
    cap = _UNBOUNDED * (1.0 + abs(fun(center)))
    best_y, best_v = center, -np.inf
    for y0 in inits:
        y, v = _ascend(fun, K, y0, steps, cap)
        if v == np.inf:
            return np.inf
        if v > best_v:
            best_y, best_v = y, v

    def penalized(y):
        p = K.project(y)
        return fun(p) - float((y - p) @ (y - p))

    target = fun if isinstance(K, WholeSpace) else penalized
    y, _ = _gradient_sampling(target, best_y, 1e-3 * scale, rng)
    polished = fun(K.project(y))
    if polished > cap:
        return np.inf
    return float(max(best_v, polished))


def ep_residual(f: Bifunction, K: ConvexSet, x, seed=0) -> float:
    """max(0, sup over y in K of -f(x, y)); zero iff x solves the EP."""
    x = as_vector(x, K.dim)
    m = f.min_second(x, K)
    if m is None:
        m = -maximize_over(lambda y: -f(x, y), K, x, seed)
    return max(0.0, -float(m))


def minty_residual(f: Bifunction, K: ConvexSet, x, seed=0) -> float:
    """max(0, sup over y in K of f(y, x)); zero iff x solves the dual EP."""
    x = as_vector(x, K.dim)
    m = f.max_first(x, K)
    if m is None:
        m = maximize_over(lambda y: f(y, x), K, x, seed)
    return max(0.0, float(m))


def _difference_phi(f):
    if isinstance(f, DifferenceBifunction):
        return 1.0, f.phi
    if isinstance(f, CombinedBifunction):
        live = [(w, h) for w, h in f.terms if w != 0]
        if len(live) == 1 and isinstance(live[0][1], DifferenceBifunction):
            return live[0][0], live[0][1].phi
    return None


def fitzpatrick(f: Bifunction, K: ConvexSet, x, u, seed=0, method="auto") -> float:
    """Fitzpatrick transform sup over y in K of <u, y> + f(y, x).

    With ``method="auto"`` the closed form ``phi*(u) + phi(x)`` is used for
    difference bifunctions on the whole space (and ``sigma_K(u)`` for the
    zero bifunction); ``method="numeric"`` always runs the estimator.
    """
    x = as_vector(x, K.dim, "x")
    u = as_vector(u, K.dim, "u")
    if method == "auto":
        if isinstance(f, ZeroBifunction):
            return K.support(u)
        diff = _difference_phi(f)
        if diff is not None and isinstance(K, WholeSpace):
            w, phi = diff
            try:
                # (w phi)*(u) = w phi*(u / w)
                conj = w * phi.conjugate(u / w) if w > 0 else (0.0 if not np.any(u) else np.inf)
                return float(conj + w * phi.value(x))
            except MissingCapabilityError:
                pass
    elif method != "numeric":
        raise ValueError(f"unknown method {method!r}")
    return maximize_over(lambda y: float(u @ y) + f(y, x), K, x, seed)


def geometric_condition_summand(f, K, S_f: ConvexSet, u, p, lam, beta, seed=0) -> float:
    """lam*beta*[F_f(u, 2p/beta) - sigma_{S_f}(2p/beta)]; may be ``inf``."""
    q = 2.0 * as_vector(p, K.dim, "p") / beta
    F = fitzpatrick(f, K, u, q, seed)
    if F == np.inf:
        return np.inf
    return float(lam * beta * (F - S_f.support(q)))


def normal_cone_element(g: Bifunction, S_f: ConvexSet, u):
    """p in N_{S_f}(u) with -p the diagonal subgradient of g at u, projected."""
    v = g.diagonal_subgradient(as_vector(u, S_f.dim, "u"))
    return S_f.normal_cone_project(u, -v)


@dataclass
class GeometricMonitor:
    """Running partial sums of the discrete geometric condition at one (u, p)."""

    f: Bifunction
    K: ConvexSet
    S_f: ConvexSet
    u: np.ndarray
    p: np.ndarray
    partial_sum: float = 0.0
    summands: list = field(default_factory=list)

    def update(self, lam, beta):
        s = geometric_condition_summand(self.f, self.K, self.S_f, self.u, self.p, lam, beta)
        self.summands.append(s)
        self.partial_sum += s
        return s

    @property
    def violated_at(self):
        """Indices (0-based) where a summand was infinite or below -1e-8."""
        return [i for i, s in enumerate(self.summands) if s == np.inf or s < -1e-8]


# ---------------------------------------------------------------------------
# energy estimate of the strong-convergence argument


class WindowConstantError(ValueError):
    """Auxiliary constant b is outside (2 alpha, 1/(4 alpha) - 1)."""


@dataclass(frozen=True)
class EnergyCheckContext:
    u: np.ndarray
    b: float
    alpha_bound: float

    def __post_init__(self):
        object.__setattr__(self, "u", as_vector(self.u, name="u"))
        a = self.alpha_bound
        if not self.b > 0:
            raise WindowConstantError("b must be positive")
        if a > 0 and not (2 * a < self.b < 1 / (4 * a) - 1):
            raise WindowConstantError(
                f"b={self.b} outside admissible window ({2 * a}, {1 / (4 * a) - 1})"
            )


def energy_check_strong(ctx: EnergyCheckContext, trace, g: Bifunction):
    """Per-step violation of the energy inequality driving strong convergence.

    With ``a_n = ||x_n - u||^2``, ``delta_n = ||x_n - x_{n-1}||^2`` and
    ``b_n = a_n - alpha_n a_{n-1} + (1 + b) alpha_n delta_n`` this returns,
    for each step n with all data available, ``max(0, lhs - rhs)`` of

        b_{n+1} <= 2 lam_n g(z_{n+1}, u) + b_n + (alpha (b + 1) - 1/4) delta_{n+1}.

    Result is an array indexed from step n = 1.
    """
    xs = trace.iterates()
    zs = trace.inner_points()
    lam = trace.column("lambda")
    alp = trace.column("alpha")
    u, b, A = ctx.u, ctx.b, ctx.alpha_bound
    # xs[k] = x_k, k = 0..N; lam[k], alp[k] = parameters of step k (k >= 1)
    a = np.array([float((x - u) @ (x - u)) for x in xs])
    delta = np.full(len(xs), np.nan)
    delta[1:] = [float((xs[k] - xs[k - 1]) @ (xs[k] - xs[k - 1])) for k in range(1, len(xs))]

    def alpha_at(k):
        return 0.0 if k == 1 and np.isnan(alp[k]) else alp[k]

    def bn(k):
        al = alpha_at(k)
        return a[k] - al * a[k - 1] + (1 + b) * al * delta[k]

    out = []
    for n in range(1, len(xs) - 2):
        lhs = bn(n + 1)
        rhs = 2 * lam[n] * g(zs[n + 1], u) + bn(n) + (A * (b + 1) - 0.25) * delta[n + 1]
        out.append(max(0.0, lhs - rhs))
    return np.array(out)


# ---------------------------------------------------------------------------
# summability


@dataclass(frozen=True)
class SummabilityReport:
    windows: tuple
    step_tails: tuple
    inner_tails: tuple
    lower_tails: tuple | None
    step_decreasing: bool
    inner_decreasing: bool
    lower_decreasing: bool | None

    @property
    def passed(self):
        flags = [self.step_decreasing, self.inner_decreasing]
        if self.lower_decreasing is not None:
            flags.append(self.lower_decreasing)
        return all(flags)


def _strictly_decreasing(vals):
    vals = np.asarray(vals)
    if np.all(vals == 0):
        return True
    return bool(np.all(np.diff(vals) < 0))


def summability_report(trace, u=None, f: Bifunction | None = None, windows=None) -> SummabilityReport:
    """Tail sums over doubling windows [N, 2N) of the three summable series.

    Series: ``||x_{n+1} - x_n||^2``, ``||z_{n+1} - x_n||^2`` and, when `u`
    and `f` are given, ``lam_n beta_n f(u, x_{n+1})``. Default windows are
    the powers of two from 16 up to the largest fitting the trace.
    """
    xs = trace.iterates()
    zs = trace.inner_points()
    N = len(xs) - 1
    if N < 64:
        raise ValueError("trace too short for a summability report (need >= 64 steps)")
    lam = trace.column("lambda")
    beta = trace.column("beta")
    # index n -> step n (x_n -> x_{n+1})
    steps = np.array([np.nan] + [float(np.sum((xs[n + 1] - xs[n]) ** 2)) for n in range(1, N)])
    inner = np.array([np.nan] + [float(np.sum((zs[n + 1] - xs[n]) ** 2)) for n in range(1, N)])
    lower = None
    if u is not None and f is not None:
        lower = np.array([np.nan] + [lam[n] * beta[n] * f(u, xs[n + 1]) for n in range(1, N)])
    if windows is None:
        windows = []
        w = 16
        while 2 * w <= N:
            windows.append(w)
            w *= 2
    windows = tuple(int(w) for w in windows if 2 * w <= N)

    def tails(series):
        return tuple(float(np.sum(series[w:2 * w])) for w in windows)

    st, it = tails(steps), tails(inner)
    lt = tails(lower) if lower is not None else None
    return SummabilityReport(
        windows, st, it, lt,
        _strictly_decreasing(st), _strictly_decreasing(it),
        None if lt is None else _strictly_decreasing(np.abs(lt)),
    )
