"""Dense linear algebra helpers and projection-capable convex sets.

Every vector in the package is a 1-D float64 ``numpy`` array. Sets are
immutable; their array fields are marked read-only on construction.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

__all__ = [
    "DimensionError",
    "SingularMatrixError",
    "as_vector",
    "as_matrix",
    "ConvexSet",
    "WholeSpace",
    "Ball",
    "Box",
    "Halfspace",
    "project",
    "support_function",
    "solve_linear",
    "weighted_norm_sq",
    "is_positive_semidefinite",
    "SINGULAR_THRESHOLD",
]

SINGULAR_THRESHOLD = 1e-12
_ULPS = 8 * np.finfo(float).eps


class DimensionError(ValueError):
    """Operand dimensions do not agree."""


class SingularMatrixError(np.linalg.LinAlgError):
    """A pivot fell below the singularity threshold."""


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def as_vector(x, dim=None, name="x"):
    """Return `x` as a finite float vector, checking its length against `dim`."""
    v = np.asarray(x, dtype=float)
    if v.ndim == 0:
        v = v.reshape(1)
    if v.ndim != 1:
        raise DimensionError(f"{name} must be one-dimensional, got shape {v.shape}")
    if dim is not None and v.shape[0] != dim:
        raise DimensionError(f"{name} has dimension {v.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} has non-finite entries")
    return v


def as_matrix(M, dim=None, name="M"):
    m = np.asarray(M, dtype=float)
    if m.ndim == 0:
        m = m.reshape(1, 1)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {m.shape}")
    if dim is not None and m.shape[0] != dim:
        raise DimensionError(f"{name} is {m.shape[0]}x{m.shape[0]}, expected {dim}x{dim}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} has non-finite entries")
    return m


class ConvexSet:
    """Closed convex subset of R^d with a cheap Euclidean projection."""

    dim: int

    def project(self, x):
        raise NotImplementedError

    def support(self, p):
        raise NotImplementedError

    def contains(self, x, tol=1e-10):
        x = as_vector(x, self.dim)
        return bool(np.linalg.norm(x - self.project(x)) <= tol)

    def normal_cone_project(self, x, w):
        """Project `w` onto the normal cone of the set at `x` (x in the set)."""
        raise NotImplementedError

    def sample(self, rng, n, scale=1.0, around=None):
        """Draw `n` points of the set, one per row.

        Bounded sets are sampled uniformly-ish; unbounded ones from a Gaussian
        cloud of width `scale` centred at `around` (default origin), projected.
        """
        raise NotImplementedError

    def _check(self, x, name="x"):
        return as_vector(x, self.dim, name)


@dataclass(frozen=True)
class WholeSpace(ConvexSet):
    dim: int

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dimension must be positive")

    def project(self, x):
        return self._check(x).copy()

    def support(self, p):
        p = self._check(p, "p")
        return 0.0 if not np.any(p) else np.inf

    def normal_cone_project(self, x, w):
        return np.zeros(self.dim)

    def sample(self, rng, n, scale=1.0, around=None):
        c = np.zeros(self.dim) if around is None else self._check(around)
        return c + scale * rng.standard_normal((n, self.dim))


@dataclass(frozen=True)
class Ball(ConvexSet):
    center: np.ndarray
    radius: float
    dim: int = field(init=False)

    def __post_init__(self):
        c = _frozen(as_vector(self.center, name="center"))
        if not self.radius > 0:
            raise ValueError("ball radius must be positive")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", float(self.radius))
        object.__setattr__(self, "dim", c.shape[0])

    def project(self, x):
        x = self._check(x)
        d = x - self.center
        r = np.linalg.norm(d)
        # a few ulps of slack keeps projection exactly idempotent
        if r <= self.radius * (1 + _ULPS):
            return x.copy()
        return self.center + (self.radius / r) * d

    def support(self, p):
        p = self._check(p, "p")
        if not np.any(p):
            return 0.0
        return float(p @ self.center + self.radius * np.linalg.norm(p))

    def normal_cone_project(self, x, w):
        x = self._check(x)
        d = x - self.center
        r = np.linalg.norm(d)
        if r < self.radius * (1 - 1e-12):
            return np.zeros(self.dim)
        e = d / r
        return max(0.0, float(w @ e)) * e

    def sample(self, rng, n, scale=1.0, around=None):
        g = rng.standard_normal((n, self.dim))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        r = self.radius * rng.random(n) ** (1.0 / self.dim)
        return self.center + r[:, None] * g


@dataclass(frozen=True)
class Box(ConvexSet):
    lower: np.ndarray
    upper: np.ndarray
    dim: int = field(init=False)

    def __post_init__(self):
        lo = _frozen(as_vector(self.lower, name="lower"))
        hi = _frozen(as_vector(self.upper, lo.shape[0], name="upper"))
        if np.any(lo > hi):
            raise ValueError("box requires lower <= upper componentwise")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "dim", lo.shape[0])

    def project(self, x):
        return np.clip(self._check(x), self.lower, self.upper)

    def support(self, p):
        p = self._check(p, "p")
        return float(np.sum(np.where(p > 0, p * self.upper, p * self.lower)))

    def normal_cone_project(self, x, w):
        x = self._check(x)
        out = np.zeros(self.dim)
        at_hi = x >= self.upper
        at_lo = x <= self.lower
        out[at_hi] = np.maximum(w[at_hi], 0.0)
        out[at_lo] = np.minimum(w[at_lo], 0.0)
        # degenerate coordinate (lower == upper): the cone is the whole line
        both = at_hi & at_lo
        out[both] = w[both]
        return out

    def sample(self, rng, n, scale=1.0, around=None):
        return self.lower + (self.upper - self.lower) * rng.random((n, self.dim))


@dataclass(frozen=True)
class Halfspace(ConvexSet):
    """The set {y : <normal, y> <= offset}."""

    normal: np.ndarray
    offset: float
    dim: int = field(init=False)

    def __post_init__(self):
        a = _frozen(as_vector(self.normal, name="normal"))
        if not np.any(a):
            raise ValueError("halfspace normal must be nonzero")
        object.__setattr__(self, "normal", a)
        object.__setattr__(self, "offset", float(self.offset))
        object.__setattr__(self, "dim", a.shape[0])

    def project(self, x):
        x = self._check(x)
        excess = x @ self.normal - self.offset
        if excess <= _ULPS * (abs(self.offset) + np.linalg.norm(self.normal) * np.linalg.norm(x)):
            return x.copy()
        return x - (excess / (self.normal @ self.normal)) * self.normal

    def support(self, p):
        p = self._check(p, "p")
        if not np.any(p):
            return 0.0
        # finite only along the outward normal ray
        t = (p @ self.normal) / (self.normal @ self.normal)
        if t >= 0 and np.allclose(p, t * self.normal, rtol=0, atol=1e-14 * (1 + np.linalg.norm(p))):
            return float(t * self.offset)
        return np.inf

    def normal_cone_project(self, x, w):
        x = self._check(x)
        if x @ self.normal < self.offset - 1e-12 * (1 + abs(self.offset)):
            return np.zeros(self.dim)
        a = self.normal
        return max(0.0, float(w @ a) / (a @ a)) * a

    def sample(self, rng, n, scale=1.0, around=None):
        c = np.zeros(self.dim) if around is None else self._check(around)
        pts = c + scale * rng.standard_normal((n, self.dim))
        return np.array([self.project(p) for p in pts])


def project(s: ConvexSet, x):
    """Nearest point of `s` to `x`."""
    return s.project(x)


def support_function(s: ConvexSet, p) -> float:
    """sup over `s` of <p, y>; ``inf`` for directions in which `s` is unbounded."""
    return s.support(p)


def solve_linear(M, b, threshold=SINGULAR_THRESHOLD):
    """Solve ``M z = b`` by LU with partial pivoting.

    Raises :class:`SingularMatrixError` when a pivot is smaller than
    ``threshold`` times the largest row norm of `M`.
    """
    M = as_matrix(M)
    b = np.asarray(b, dtype=float)
    if b.shape[0] != M.shape[0]:
        raise DimensionError(f"right-hand side has length {b.shape[0]}, expected {M.shape[0]}")
    scale = np.max(np.linalg.norm(M, axis=1)) if M.size else 0.0
    with warnings.catch_warnings():
        # exact zero pivots are reported below as SingularMatrixError
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(M, check_finite=False)
    if scale == 0.0 or np.min(np.abs(np.diag(lu))) < threshold * scale:
        raise SingularMatrixError("matrix is numerically singular")
    return scipy.linalg.lu_solve((lu, piv), b, check_finite=False)


def weighted_norm_sq(M, v) -> float:
    """Return <M v, v>."""
    v = as_vector(v, name="v")
    M = as_matrix(M, v.shape[0])
    return float((M @ v) @ v)


def is_positive_semidefinite(M, tol=1e-10) -> bool:
    """True iff the symmetric part of `M` has smallest eigenvalue >= -tol."""
    M = as_matrix(M)
    S = 0.5 * (M + M.T)
    return bool(np.linalg.eigvalsh(S)[0] >= -tol)
