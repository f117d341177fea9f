"""Proximal schemes for bilevel equilibrium problems and their outer loop.

Five one-step maps share the signature ``step(problem, state, schedule)``:

``ipsa``              inertial proximal splitting, J^{beta f} o J^{g} at y_n
``psm``               the same splitting without inertia
``inertial_prox``     J^{beta f + g} at the inertial point y_n
``ppm_penalization``  J^{beta f + g} at x_n
``rppm``              J^{f + beta g} at x_n (regularized proximal point)

where ``y_n = x_n + alpha_n (x_n - x_{n-1})`` and every J is taken with
step ``lambda_n``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .bifunctions import CombinedBifunction, scaled
from .core import as_vector
from .diagnostics import ep_residual
from .resolvents import DEFAULT_INNER_BUDGET, DEFAULT_INNER_TOL, resolvent

__all__ = [
    "ALPHA_MAX",
    "ALPHA_LIMIT",
    "Schedule",
    "SolverState",
    "StepOptions",
    "TraceRecord",
    "Trace",
    "Regime",
    "RegimeReport",
    "Method",
    "StopRule",
    "SolverError",
    "ipsa_step",
    "psm_step",
    "inertial_prox_step",
    "ppm_penalization_step",
    "rppm_step",
    "STEPS",
    "validate_regime",
    "run",
    "initial_state",
]

# inertia must stay strictly below (sqrt(3) - 1) / 4
ALPHA_LIMIT = (math.sqrt(3.0) - 1.0) / 4.0
ALPHA_MAX = ALPHA_LIMIT - 1e-9


@dataclass(frozen=True)
class Schedule:
    """Parameter sequences lambda_n, beta_n, alpha_n, evaluated from n = 1."""

    lambda_fn: object
    beta_fn: object
    alpha_fn: object = lambda n: 0.0
    clamp_alpha: bool = True

    def lam(self, n):
        v = float(self.lambda_fn(n))
        if not v > 0 or not math.isfinite(v):
            raise ValueError(f"lambda_{n} = {v} must be positive and finite")
        return v

    def beta(self, n):
        v = float(self.beta_fn(n))
        if not v >= 0 or not math.isfinite(v):
            raise ValueError(f"beta_{n} = {v} must be nonnegative and finite")
        return v

    def raw_alpha(self, n):
        return float(self.alpha_fn(n))

    def alpha(self, n):
        v = self.raw_alpha(n)
        if not math.isfinite(v):
            raise ValueError(f"alpha_{n} = {v} is not finite")
        if self.clamp_alpha:
            v = min(max(v, 0.0), ALPHA_MAX)
        return v


@dataclass(frozen=True)
class SolverState:
    n: int
    x_prev: np.ndarray
    x_curr: np.ndarray
    z_curr: np.ndarray
    y_curr: np.ndarray


def initial_state(problem) -> SolverState:
    x0 = as_vector(problem.x0, problem.K.dim, "x0")
    x1 = as_vector(problem.x1, problem.K.dim, "x1")
    return SolverState(1, x0, x1, x1.copy(), x1.copy())


@dataclass(frozen=True)
class StepOptions:
    inner_tol: float = DEFAULT_INNER_TOL
    inner_budget: int = DEFAULT_INNER_BUDGET
    seed: int = 0


_DEFAULT_OPTIONS = StepOptions()


def _J(h, problem, lam, x, opts):
    return resolvent(h, problem.K, lam, x, opts.inner_tol, opts.inner_budget, opts.seed)


def _advance(state, x_new, z_new, y):
    return SolverState(state.n + 1, state.x_curr, x_new, z_new, y)


def _inertial_point(state, alpha):
    return state.x_curr + alpha * (state.x_curr - state.x_prev)


def _splitting(problem, state, schedule, opts, inertial):
    n = state.n
    lam, beta = schedule.lam(n), schedule.beta(n)
    y = _inertial_point(state, schedule.alpha(n)) if inertial else state.x_curr
    z = _J(problem.g, problem, lam, y, opts)
    x = _J(scaled(problem.f, beta), problem, lam, z, opts)
    return _advance(state, x, z, y)


def ipsa_step(problem, state, schedule, opts=_DEFAULT_OPTIONS) -> SolverState:
    """x_{n+1} = J_lam^{beta f}(J_lam^{g}(y_n))."""
    return _splitting(problem, state, schedule, opts, inertial=True)


def psm_step(problem, state, schedule, opts=_DEFAULT_OPTIONS) -> SolverState:
    """x_{n+1} = J_lam^{beta f}(J_lam^{g}(x_n))."""
    return _splitting(problem, state, schedule, opts, inertial=False)


def _penalized(problem, state, schedule, opts, inertial):
    n = state.n
    lam, beta = schedule.lam(n), schedule.beta(n)
    y = _inertial_point(state, schedule.alpha(n)) if inertial else state.x_curr
    h = CombinedBifunction(((beta, problem.f), (1.0, problem.g)))
    x = _J(h, problem, lam, y, opts)
    return _advance(state, x, x, y)


def inertial_prox_step(problem, state, schedule, opts=_DEFAULT_OPTIONS) -> SolverState:
    """x_{n+1} = J_lam^{beta f + g}(y_n)."""
    return _penalized(problem, state, schedule, opts, inertial=True)


def ppm_penalization_step(problem, state, schedule, opts=_DEFAULT_OPTIONS) -> SolverState:
    """x_{n+1} = J_lam^{beta f + g}(x_n)."""
    return _penalized(problem, state, schedule, opts, inertial=False)


def rppm_step(problem, state, schedule, opts=_DEFAULT_OPTIONS) -> SolverState:
    """x_{n+1} = J_lam^{f + beta g}(x_n)."""
    n = state.n
    lam, beta = schedule.lam(n), schedule.beta(n)
    h = CombinedBifunction(((1.0, problem.f), (beta, problem.g)))
    x = _J(h, problem, lam, state.x_curr, opts)
    return _advance(state, x, x, state.x_curr)


class Method(str, enum.Enum):
    IPSA = "ipsa"
    PSM = "psm"
    INERTIAL_PROX = "inertial_prox"
    PPM_PENALIZATION = "ppm_penalization"
    RPPM = "rppm"


STEPS = {
    Method.IPSA: ipsa_step,
    Method.PSM: psm_step,
    Method.INERTIAL_PROX: inertial_prox_step,
    Method.PPM_PENALIZATION: ppm_penalization_step,
    Method.RPPM: rppm_step,
}


# ---------------------------------------------------------------------------
# regime validation


class Regime(str, enum.Enum):
    WEAK = "weak"        # l2 \ l1 step sizes, liminf lam*beta > 0
    STRONG = "strong"    # lam -> 0, sum lam = inf, beta -> inf, liminf lam*beta > 0
    NONE = "none"


@dataclass(frozen=True)
class RegimeReport:
    weak_violations: tuple
    strong_violations: tuple
    horizon: int

    @property
    def weak(self):
        return not self.weak_violations

    @property
    def strong(self):
        return not self.strong_violations

    @property
    def regime(self):
        if self.strong:
            return Regime.STRONG
        if self.weak:
            return Regime.WEAK
        return Regime.NONE

    @property
    def violations(self):
        if self.regime is not Regime.NONE:
            return ()
        return tuple(dict.fromkeys(self.weak_violations + self.strong_violations))

    def summary(self):
        lines = [f"regime check over n = 1..{self.horizon}"]
        for name, bad in (("weak convergence", self.weak_violations),
                          ("strong convergence", self.strong_violations)):
            verdict = "satisfied" if not bad else "violated: " + "; ".join(bad)
            lines.append(f"  {name} hypotheses: {verdict}")
        return "\n".join(lines)


_DIVERGE_RATIO = 0.9


def _window_sums(vals, k_windows=3):
    # vals[i] = term at n = i + 1; windows [2^k, 2^{k+1})
    N = len(vals)
    top = int(math.floor(math.log2(N + 1))) - 1
    ks = [k for k in range(top - k_windows + 1, top + 1) if k >= 0]
    return [float(np.sum(vals[2 ** k - 1: 2 ** (k + 1) - 1])) for k in ks]


def _series_diverges(vals):
    w = _window_sums(vals)
    if len(w) < 2 or w[0] <= 0:
        return False
    ratios = [b / a for a, b in zip(w, w[1:]) if a > 0]
    return bool(ratios) and math.prod(ratios) ** (1 / len(ratios)) >= _DIVERGE_RATIO


def _window_extreme(vals, fn):
    N = len(vals)
    half, quarter = N // 2, N // 4
    return fn(vals[quarter:half]), fn(vals[half:])


def validate_regime(schedule: Schedule, horizon=10_000) -> RegimeReport:
    """Numerically check the schedule hypotheses of the weak and strong convergence regimes.

    Divergence and convergence of series are judged from the ratio of sums
    over consecutive doubling windows (ratio near 1: divergent). Limits are
    judged by comparing extremes over the last two quarter/half windows.
    """
    if horizon < 100:
        raise ValueError("horizon must be >= 100")
    ns = np.arange(1, horizon + 1)
    lam = np.array([schedule.lam(n) for n in ns])
    beta = np.array([schedule.beta(n) for n in ns])
    raw_alpha = np.array([schedule.raw_alpha(n) for n in ns])
    alpha = np.array([schedule.alpha(n) for n in ns])

    common = []
    if np.any(raw_alpha > ALPHA_MAX):
        common.append(f"alpha exceeds (sqrt(3)-1)/4 ~ {ALPHA_LIMIT:.4f} (max {raw_alpha.max():.4g})")
    if np.any(alpha < 0):
        common.append("alpha takes negative values")
    if np.any(np.diff(alpha) < -1e-15):
        common.append("alpha is not nondecreasing")
    lb = lam * beta
    prev_min, last_min = _window_extreme(lb, np.min)
    if not (last_min > 1e-12 and last_min >= _DIVERGE_RATIO * prev_min):
        common.append("liminf lambda_n*beta_n appears to be 0")

    sum_lam_diverges = _series_diverges(lam)
    weak = list(common)
    if not sum_lam_diverges:
        weak.append("sum lambda_n converges (lambda not in l2 minus l1)")
    if _series_diverges(lam ** 2):
        weak.append("sum lambda_n^2 diverges (lambda not in l2)")

    strong = list(common)
    if not sum_lam_diverges:
        strong.append("sum lambda_n converges")
    prev_max, last_max = _window_extreme(lam, np.max)
    if not (last_max <= 1e-12 or last_max < _DIVERGE_RATIO * prev_max):
        strong.append("lambda_n does not tend to 0")
    prev_bmin, last_bmin = _window_extreme(beta, np.min)
    if not last_bmin > 1.05 * prev_bmin:
        strong.append("beta_n does not tend to infinity")
    return RegimeReport(tuple(weak), tuple(strong), horizon)


# ---------------------------------------------------------------------------
# traces and the outer loop


@dataclass(frozen=True)
class TraceRecord:
    """Iterate x_n with the parameters of the step that produced it."""

    n: int
    lam: float
    beta: float
    alpha: float
    x: np.ndarray
    z: np.ndarray
    step_norm: float
    err_to_ref: float | None = None
    ep_residual: float | None = None


@dataclass
class Trace:
    dim: int
    x0: np.ndarray
    method: str = ""
    records: list = field(default_factory=list)

    def append(self, rec: TraceRecord):
        if self.records and rec.n <= self.records[-1].n:
            raise ValueError("trace indices must increase")
        if rec.step_norm < 0:
            raise ValueError("negative step norm")
        self.records.append(rec)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def iterates(self):
        """Array whose row k is x_k, k = 0..N."""
        return np.vstack([self.x0] + [r.x for r in self.records])

    def inner_points(self):
        """Array whose row k is z_k (row 0 is NaN; z_1 is x_1 by convention)."""
        return np.vstack([np.full(self.dim, np.nan)] + [r.z for r in self.records])

    def column(self, name):
        """Per-step parameter array p with p[k] the value used in step k (p[0] = NaN)."""
        attr = {"lambda": "lam"}.get(name, name)
        return np.array([getattr(r, attr) for r in self.records], dtype=float)

    def errors(self):
        return np.array([np.nan if r.err_to_ref is None else r.err_to_ref for r in self.records])

    @property
    def final(self):
        return self.records[-1]


class SolverError(RuntimeError):
    """A step failed; ``trace`` holds everything computed before it."""

    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class StopRule:
    step_tol: float = 0.0
    residual_tol: float = 0.0
    max_iters: int | None = None


def _record(problem, state, lam, beta, alpha, reference, track_residual, seed):
    err = None if reference is None else float(np.linalg.norm(state.x_curr - reference))
    res = ep_residual(problem.f, problem.K, state.x_curr, seed) if track_residual else None
    return TraceRecord(
        n=state.n, lam=lam, beta=beta, alpha=alpha,
        x=state.x_curr, z=state.z_curr,
        step_norm=float(np.linalg.norm(state.x_curr - state.x_prev)),
        err_to_ref=err, ep_residual=res,
    )


def run(problem, method, schedule: Schedule, budget, stop: StopRule | None = None, seed=0,
        opts: StepOptions | None = None, reference="problem", track_residual=True,
        callback=None) -> Trace:
    """Iterate `method` from (x0, x1) for at most `budget` steps.

    Stops early when the step norm is below ``stop.step_tol`` and the
    lower-level residual is below ``stop.residual_tol`` (both tolerances must
    be positive for early stopping). ``reference="problem"`` measures errors
    against ``problem.x_ref``. `callback(state)` runs after every step.
    """
    method = Method(method)
    step = STEPS[method]
    stop = stop or StopRule()
    opts = opts or StepOptions(seed=seed)
    if isinstance(reference, str):
        if reference != "problem":
            raise ValueError(f"unknown reference {reference!r}")
        reference = getattr(problem, "x_ref", None)
    elif reference is not None:
        reference = as_vector(reference, problem.K.dim, "reference")
    if budget < 0:
        raise ValueError("budget must be >= 0")
    limit = budget if stop.max_iters is None else min(budget, stop.max_iters)

    state = initial_state(problem)
    trace = Trace(problem.K.dim, state.x_prev, method.value)
    nan = float("nan")
    trace.append(_record(problem, state, nan, nan, nan, reference, track_residual, seed))
    for _ in range(limit):
        n = state.n
        try:
            state = step(problem, state, schedule, opts)
        except Exception as exc:
            raise SolverError(f"step {n} of {method.value} failed: {exc}", trace) from exc
        lam, beta = schedule.lam(n), schedule.beta(n)
        alpha = schedule.alpha(n) if method in (Method.IPSA, Method.INERTIAL_PROX) else 0.0
        rec = _record(problem, state, lam, beta, alpha, reference, track_residual, seed)
        trace.append(rec)
        if callback is not None:
            callback(state)
        if (stop.step_tol > 0 and stop.residual_tol > 0 and rec.step_norm < stop.step_tol
                and rec.ep_residual is not None and rec.ep_residual < stop.residual_tol):
            break
    return trace
