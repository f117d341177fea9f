"""Bifunctions f(x, y) on K x K, convex building blocks, and sampled checkers.

A bifunction is any object with a ``dim``, a ``strategy`` telling the
resolvent engine how it can be inverted, and ``__call__(x, y)``. The
optional ``diagonal_subgradient(y)`` returns one element of the
subdifferential of ``f(y, .)`` at ``y``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    ConvexSet,
    DimensionError,
    WholeSpace,
    as_matrix,
    as_vector,
    is_positive_semidefinite,
)

__all__ = [
    "MissingCapabilityError",
    "ResolventStrategy",
    "ConvexFunction",
    "MaxOneNorm",
    "ShiftedQuadratic",
    "Bifunction",
    "ZeroBifunction",
    "AffineBifunction",
    "DifferenceBifunction",
    "CallableBifunction",
    "CombinedBifunction",
    "scaled",
    "evaluate",
    "diagonal_subgradient",
    "MonotonicityReport",
    "check_monotone",
    "check_strong_monotone",
    "MONOTONE_TOL",
]

MONOTONE_TOL = 1e-10


class MissingCapabilityError(TypeError):
    """The object lacks an optional capability (prox, conjugate, subgradient)."""


class ResolventStrategy(enum.IntEnum):
    # lower value wins when dispatching
    CLOSED_FORM_PROX = 0
    AFFINE_LINEAR_SOLVE = 1
    GENERIC_ITERATIVE = 2


# ---------------------------------------------------------------------------
# convex functions


class ConvexFunction:
    """Proper convex function on R^d with optional closed-form helpers."""

    def value(self, x) -> float:
        raise NotImplementedError

    def __call__(self, x):
        return self.value(x)

    def prox(self, t, w):
        """argmin_y t*phi(y) + 0.5*||y - w||^2."""
        raise MissingCapabilityError(f"{type(self).__name__} has no prox")

    def conjugate(self, p) -> float:
        raise MissingCapabilityError(f"{type(self).__name__} has no conjugate")

    def subgradient(self, x):
        raise MissingCapabilityError(f"{type(self).__name__} has no subgradient")

    def min_over(self, K: ConvexSet):
        """inf of phi over `K`, or None when no closed form is known."""
        return None


class MaxOneNorm(ConvexFunction):
    """phi(x) = max(1, ||x||); minimised exactly on the closed unit ball."""

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return max(1.0, math.sqrt(float(x @ x)))

    def prox(self, t, w):
        w = np.asarray(w, dtype=float)
        r = np.linalg.norm(w)
        if r <= 1.0:
            return w.copy()
        if r <= 1.0 + t:
            return w / r
        return (1.0 - t / r) * w

    def conjugate(self, p):
        r = float(np.linalg.norm(p))
        return r - 1.0 if r <= 1.0 else np.inf

    def subgradient(self, x):
        # minimal-norm element; on the unit sphere the hull of {0, x} contains 0
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x)
        if r <= 1.0:
            return np.zeros_like(x)
        return x / r

    def min_over(self, K):
        return max(1.0, float(np.linalg.norm(K.project(np.zeros(K.dim)))))


@dataclass(frozen=True)
class ShiftedQuadratic(ConvexFunction):
    """phi(x) = (scale/2) ||x - center||^2."""

    center: np.ndarray
    scale: float = 1.0

    def __post_init__(self):
        c = as_vector(self.center, name="center").copy()
        c.setflags(write=False)
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        object.__setattr__(self, "center", c)

    def value(self, x):
        d = np.asarray(x, dtype=float) - self.center
        return 0.5 * self.scale * float(d @ d)

    def prox(self, t, w):
        return (np.asarray(w, dtype=float) + t * self.scale * self.center) / (1.0 + t * self.scale)

    def conjugate(self, p):
        p = np.asarray(p, dtype=float)
        return float(p @ self.center + 0.5 * (p @ p) / self.scale)

    def subgradient(self, x):
        return self.scale * (np.asarray(x, dtype=float) - self.center)

    def min_over(self, K):
        d = K.project(self.center) - self.center
        return 0.5 * self.scale * float(d @ d)


# ---------------------------------------------------------------------------
# bifunctions


class Bifunction:
    dim: int
    strategy = ResolventStrategy.GENERIC_ITERATIVE

    def __call__(self, x, y) -> float:
        raise NotImplementedError

    def diagonal_subgradient(self, y):
        raise MissingCapabilityError(f"{type(self).__name__} has no diagonal subgradient")

    def min_second(self, x, K: ConvexSet):
        """inf over y in K of f(x, y) when a closed form exists, else None."""
        return None

    def max_first(self, x, K: ConvexSet):
        """sup over y in K of f(y, x) when a closed form exists, else None."""
        return None

    def __mul__(self, w):
        return CombinedBifunction(((float(w), self),))

    __rmul__ = __mul__

    def __add__(self, other):
        return CombinedBifunction(_terms(self) + _terms(other))


def _terms(h):
    if isinstance(h, CombinedBifunction):
        return tuple(h.terms)
    return ((1.0, h),)


@dataclass(frozen=True, eq=False)
class ZeroBifunction(Bifunction):
    dim: int
    strategy = ResolventStrategy.CLOSED_FORM_PROX

    def __call__(self, x, y):
        return 0.0

    def prox(self, t, w):
        return np.array(w, dtype=float)

    def diagonal_subgradient(self, y):
        return np.zeros(self.dim)

    def min_second(self, x, K):
        return 0.0

    def max_first(self, x, K):
        return 0.0


@dataclass(frozen=True, eq=False)
class AffineBifunction(Bifunction):
    """g(x, y) = <A x + B y + c, y - x>.

    Monotone iff the symmetric part of A - B is positive semidefinite;
    ``g(x, .)`` is convex iff the symmetric part of B is.
    """

    A: np.ndarray
    B: np.ndarray
    c: np.ndarray | None = None
    dim: int = field(init=False)
    strategy = ResolventStrategy.AFFINE_LINEAR_SOLVE

    def __post_init__(self):
        A = as_matrix(self.A, name="A").copy()
        B = as_matrix(self.B, A.shape[0], name="B").copy()
        c = np.zeros(A.shape[0]) if self.c is None else as_vector(self.c, A.shape[0], "c").copy()
        for a in (A, B, c):
            a.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "dim", A.shape[0])

    @property
    def jacobian(self):
        """Matrix of the diagonal subgradient map y -> (A + B) y + c."""
        return self.A + self.B

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return float((self.A @ x + self.B @ y + self.c) @ (y - x))

    def diagonal_subgradient(self, y):
        return self.jacobian @ np.asarray(y, dtype=float) + self.c

    def min_second(self, x, K):
        if not isinstance(K, WholeSpace):
            return None
        # g(x, y) = y'Sy + q'y - x'(Ax + c) with S the symmetric part of B
        x = np.asarray(x, dtype=float)
        S = 0.5 * (self.B + self.B.T)
        q = self.A @ x + self.c - self.B.T @ x
        w, V = np.linalg.eigh(S)
        if w[0] < -1e-12:
            return -np.inf
        qv = V.T @ q
        pos = w > 1e-12 * max(1.0, w[-1])
        if np.any(np.abs(qv[~pos]) > 1e-12 * (1 + np.linalg.norm(q))):
            return -np.inf
        return float(-0.25 * np.sum(qv[pos] ** 2 / w[pos]) - x @ (self.A @ x + self.c))

    def is_monotone(self, tol=1e-10):
        return is_positive_semidefinite(self.A - self.B, tol)


@dataclass(frozen=True, eq=False)
class DifferenceBifunction(Bifunction):
    """f(x, y) = phi(y) - phi(x); its resolvent is the prox of phi."""

    phi: ConvexFunction
    dim: int
    strategy = ResolventStrategy.CLOSED_FORM_PROX

    def __call__(self, x, y):
        return self.phi.value(y) - self.phi.value(x)

    def prox(self, t, w):
        return self.phi.prox(t, w)

    def diagonal_subgradient(self, y):
        return self.phi.subgradient(y)

    def min_second(self, x, K):
        m = self.phi.min_over(K)
        return None if m is None else m - self.phi.value(x)

    def max_first(self, x, K):
        m = self.phi.min_over(K)
        return None if m is None else self.phi.value(x) - m


class CallableBifunction(Bifunction):
    """Wrap plain callables; always resolved iteratively."""

    def __init__(self, fn, dim, subgradient=None):
        self.fn = fn
        self.dim = int(dim)
        self._subgradient = subgradient

    def __call__(self, x, y):
        return float(self.fn(np.asarray(x, dtype=float), np.asarray(y, dtype=float)))

    def diagonal_subgradient(self, y):
        if self._subgradient is None:
            raise MissingCapabilityError("no diagonal subgradient was supplied")
        return np.asarray(self._subgradient(np.asarray(y, dtype=float)), dtype=float)


@dataclass(frozen=True, eq=False)
class CombinedBifunction(Bifunction):
    """Nonnegative weighted sum of bifunctions."""

    terms: tuple
    dim: int = field(init=False)

    def __post_init__(self):
        terms = tuple((float(w), h) for w, h in self.terms)
        if not terms:
            raise ValueError("need at least one term")
        if any(w < 0 for w, _ in terms):
            raise ValueError("weights must be nonnegative")
        dims = {h.dim for _, h in terms}
        if len(dims) != 1:
            raise DimensionError(f"terms have mixed dimensions {sorted(dims)}")
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "dim", dims.pop())

    @property
    def strategy(self):
        live = [(w, h) for w, h in self.terms if w != 0 and not isinstance(h, ZeroBifunction)]
        if not live:
            return ResolventStrategy.CLOSED_FORM_PROX
        kinds = {h.strategy for _, h in live}
        if kinds == {ResolventStrategy.AFFINE_LINEAR_SOLVE} and all(
            isinstance(h, AffineBifunction) for _, h in live
        ):
            return ResolventStrategy.AFFINE_LINEAR_SOLVE
        if len(live) == 1 and isinstance(live[0][1], (DifferenceBifunction, ZeroBifunction)):
            return ResolventStrategy.CLOSED_FORM_PROX
        return ResolventStrategy.GENERIC_ITERATIVE

    def __call__(self, x, y):
        return float(sum(w * h(x, y) for w, h in self.terms if w != 0))

    def diagonal_subgradient(self, y):
        out = np.zeros(self.dim)
        for w, h in self.terms:
            if w != 0:
                out += w * h.diagonal_subgradient(y)
        return out

    def prox(self, t, w):
        live = [(a, h) for a, h in self.terms if a != 0 and not isinstance(h, ZeroBifunction)]
        if not live:
            return np.array(w, dtype=float)
        if self.strategy != ResolventStrategy.CLOSED_FORM_PROX:
            raise MissingCapabilityError("combination has no closed-form prox")
        a, h = live[0]
        return h.prox(a * t, w)

    def as_affine(self):
        """Collapse an all-affine combination into one AffineBifunction."""
        d = self.dim
        A, B, c = np.zeros((d, d)), np.zeros((d, d)), np.zeros(d)
        for w, h in self.terms:
            if w == 0 or isinstance(h, ZeroBifunction):
                continue
            if not isinstance(h, AffineBifunction):
                raise MissingCapabilityError("not an affine combination")
            A += w * h.A
            B += w * h.B
            c += w * h.c
        return AffineBifunction(A, B, c)

    def min_second(self, x, K):
        live = [(w, h) for w, h in self.terms if w != 0]
        if len(live) == 1:
            m = live[0][1].min_second(x, K)
            return None if m is None else live[0][0] * m
        return None

    def max_first(self, x, K):
        live = [(w, h) for w, h in self.terms if w != 0]
        if len(live) == 1:
            m = live[0][1].max_first(x, K)
            return None if m is None else live[0][0] * m
        return None


def scaled(h: Bifunction, w: float) -> CombinedBifunction:
    """The bifunction w*h, kept as a separate object (never folded into a step size)."""
    return CombinedBifunction(((w, h),))


def evaluate(h: Bifunction, x, y) -> float:
    x = as_vector(x, h.dim, "x")
    y = as_vector(y, h.dim, "y")
    return h(x, y)


def diagonal_subgradient(h: Bifunction, y):
    """One element v of the subdifferential of h(y, .) at y."""
    return h.diagonal_subgradient(as_vector(y, h.dim, "y"))


# ---------------------------------------------------------------------------
# sampled monotonicity checks


def _sample_pairs(K: ConvexSet, samples, seed):
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    X = K.sample(rng, samples, scale=2.0)
    Y = K.sample(rng, samples, scale=2.0)
    return X, Y


@dataclass(frozen=True)
class MonotonicityReport:
    max_sum: float
    samples: int
    passed: bool


def check_monotone(h: Bifunction, K: ConvexSet, samples=200, seed=0) -> MonotonicityReport:
    """Largest sampled value of h(x,y) + h(y,x); passes iff it is <= 1e-10."""
    X, Y = _sample_pairs(K, samples, seed)
    worst = max(h(x, y) + h(y, x) for x, y in zip(X, Y))
    return MonotonicityReport(float(worst), samples, bool(worst <= MONOTONE_TOL))


def check_strong_monotone(h: Bifunction, K: ConvexSet, samples=200, seed=0) -> float:
    """Sampled estimate of the strong monotonicity modulus.

    Minimum over sampled pairs of ``-(h(x,y) + h(y,x)) / ||x - y||^2``. A
    negative value means the sample found a monotonicity violation.
    """
    X, Y = _sample_pairs(K, samples, seed)
    ratios = []
    for x, y in zip(X, Y):
        d2 = float((x - y) @ (x - y))
        if d2 > 1e-14:
            ratios.append(-(h(x, y) + h(y, x)) / d2)
    if not ratios:
        return 0.0
    return float(min(ratios)) + 0.0
