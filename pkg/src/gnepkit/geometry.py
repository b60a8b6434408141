"""Convex sets: membership, Euclidean projection, player slices, cross sets.

Player indices are 0-based throughout the library. Every set is immutable
after construction and all queries are reentrant.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize, nnls

from .expr import ExprDomainError, ObjectiveExpr, parse_expression

MEMBER_TOL = 1e-9
PROJ_TOL = 1e-8
MAX_ITER = 100_000


class EmptySetError(ValueError):
    """Raised when a projection target turns out to be empty."""


class ProjectionError(RuntimeError):
    """Iterative projection hit its cap; carries the best iterate."""

    def __init__(self, message: str, best: np.ndarray, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.best = best
        self.residual = residual


def _vec(x, dim: int | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    if dim is not None and x.size != dim:
        raise ValueError(f"dimension mismatch: expected {dim}, got {x.size}")
    return x


# ---------------------------------------------------------------------------
# least-distance programming


def ldp(G: np.ndarray, h: np.ndarray) -> np.ndarray | None:
    """Minimum-norm q with ``G q >= h`` (Lawson-Hanson via NNLS).

    Returns None when the system is infeasible.
    """
    m, n = G.shape
    if m == 0 or np.all(h <= 0):
        return np.zeros(n)
    E = np.vstack([G.T, h[None, :]])
    f = np.zeros(n + 1)
    f[n] = 1.0
    u, _ = nnls(E, f, maxiter=50 * (m + n + 1))
    r = E @ u - f
    if abs(r[n]) < 1e-14:
        return None
    return -r[:n] / r[n]


def _project_halfspaces(A: np.ndarray, b: np.ndarray, x: np.ndarray) -> np.ndarray | None:
    """Exact projection of x onto {Ay <= b}; rows of A are unit norm."""
    viol = A @ x - b
    if viol.size == 0 or viol.max() <= 0:
        return x.copy()
    if A.shape[0] == 1:
        return x - viol[0] * A[0]
    q = ldp(-A, viol)
    if q is None:
        return None
    p = x + q
    # one polishing pass on the constraints that ended up active
    act = np.abs(A @ p - b) <= 1e-9 * (1 + np.abs(b))
    if act.any():
        Aa = A[act]
        lam, *_ = np.linalg.lstsq(Aa @ Aa.T, Aa @ x - b[act], rcond=None)
        if np.all(lam >= -1e-12):
            p2 = x - Aa.T @ lam
            if (A @ p2 - b).max() <= (A @ p - b).max() + 1e-14:
                p = p2
    return p


# ---------------------------------------------------------------------------
# set types


class ConvexSet:
    """Common interface of every convex set representation."""

    dim: int

    def contains(self, x, tol: float = MEMBER_TOL) -> bool:
        raise NotImplementedError

    def contains_batch(self, X, tol: float = MEMBER_TOL) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.array([self.contains(row, tol) for row in X], dtype=bool)

    def project(self, x, tol: float = PROJ_TOL) -> np.ndarray:
        raise NotImplementedError

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return np.full(self.dim, -np.inf), np.full(self.dim, np.inf)

    def is_polyhedral(self) -> bool:
        return False

    def halfspaces(self) -> tuple[np.ndarray, np.ndarray]:
        raise TypeError(f"{type(self).__name__} is not polyhedral")

    def to_dict(self) -> dict:
        raise NotImplementedError

    def _slice(self, keep: np.ndarray, fix: np.ndarray, values: np.ndarray):
        """Materialized slice in the kept coordinates, or None if unavailable."""
        return None

    def distance(self, x, tol: float = PROJ_TOL) -> float:
        x = _vec(x, self.dim)
        return float(np.linalg.norm(x - self.project(x, tol)))


@dataclass(frozen=True, eq=False)
class EmptySet(ConvexSet):
    dim: int

    def contains(self, x, tol=MEMBER_TOL):
        _vec(x, self.dim)
        return False

    def contains_batch(self, X, tol=MEMBER_TOL):
        return np.zeros(np.atleast_2d(X).shape[0], dtype=bool)

    def project(self, x, tol=PROJ_TOL):
        raise EmptySetError("projection onto an empty set")

    def to_dict(self):
        return {"type": "empty", "dim": self.dim}


def _inf_to_json(v: np.ndarray) -> list:
    out = []
    for a in v:
        if np.isposinf(a):
            out.append("inf")
        elif np.isneginf(a):
            out.append("-inf")
        else:
            out.append(float(a))
    return out


@dataclass(frozen=True, eq=False)
class Box(ConvexSet):
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = _vec(self.lo)
        hi = _vec(self.hi)
        if lo.shape != hi.shape:
            raise ValueError("box bounds differ in length")
        if np.any(lo > hi):
            raise ValueError("box has lo > hi")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.lo.size

    def contains(self, x, tol=MEMBER_TOL):
        x = _vec(x, self.dim)
        return bool(np.all(x >= self.lo - tol) and np.all(x <= self.hi + tol))

    def contains_batch(self, X, tol=MEMBER_TOL):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.all((X >= self.lo - tol) & (X <= self.hi + tol), axis=1)

    def project(self, x, tol=PROJ_TOL):
        return np.clip(_vec(x, self.dim), self.lo, self.hi)

    def bounds(self):
        return self.lo.copy(), self.hi.copy()

    def is_polyhedral(self):
        return True

    def halfspaces(self):
        eye = np.eye(self.dim)
        A = np.vstack([eye, -eye])
        b = np.concatenate([self.hi, -self.lo])
        ok = np.isfinite(b)
        return A[ok], b[ok]

    def to_dict(self):
        return {"type": "box", "lo": _inf_to_json(self.lo), "hi": _inf_to_json(self.hi)}

    def _slice(self, keep, fix, values):
        if np.any(values < self.lo[fix] - MEMBER_TOL) or np.any(values > self.hi[fix] + MEMBER_TOL):
            return EmptySet(keep.size)
        return Box(self.lo[keep], self.hi[keep])


@dataclass(frozen=True, eq=False)
class Polyhedron(ConvexSet):
    """The set ``{x : A x <= b}``."""

    A: np.ndarray
    b: np.ndarray
    _An: np.ndarray = field(init=False, repr=False)
    _bn: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = _vec(self.b)
        if A.shape[0] != b.size:
            raise ValueError("A and b have different row counts")
        norms = np.linalg.norm(A, axis=1)
        if np.any(norms == 0):
            if np.any(b[norms == 0] < 0):
                raise ValueError("polyhedron has an infeasible constant row")
        ok = norms > 0
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "_An", A[ok] / norms[ok, None])
        object.__setattr__(self, "_bn", b[ok] / norms[ok])

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    def contains(self, x, tol=MEMBER_TOL):
        x = _vec(x, self.dim)
        return bool(self._bn.size == 0 or (self._An @ x - self._bn).max() <= tol)

    def contains_batch(self, X, tol=MEMBER_TOL):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self._bn.size == 0:
            return np.ones(X.shape[0], dtype=bool)
        return (X @ self._An.T - self._bn).max(axis=1) <= tol

    def project(self, x, tol=PROJ_TOL):
        x = _vec(x, self.dim)
        p = _project_halfspaces(self._An, self._bn, x)
        if p is None:
            raise EmptySetError("polyhedron is empty")
        if not self.contains(p, tol):
            p = dykstra([Polyhedron(a[None, :], [c]) for a, c in zip(self._An, self._bn)], p, tol)
        return p

    def is_polyhedral(self):
        return True

    def halfspaces(self):
        return self._An.copy(), self._bn.copy()

    def to_dict(self):
        return {"type": "polyhedron", "A": self.A.tolist(), "b": self.b.tolist()}

    def _slice(self, keep, fix, values):
        return _slice_halfspaces(self._An, self._bn, keep, fix, values)


def _slice_halfspaces(A, b, keep, fix, values):
    Ak = A[:, keep]
    bk = b - A[:, fix] @ values
    norms = np.linalg.norm(Ak, axis=1)
    const = norms <= 1e-14
    if np.any(bk[const] < -MEMBER_TOL):
        return EmptySet(keep.size)
    Ak, bk = Ak[~const], bk[~const]
    if Ak.shape[0] == 0:
        return Box(np.full(keep.size, -np.inf), np.full(keep.size, np.inf))
    poly = Polyhedron(Ak, bk)
    if _project_halfspaces(poly._An, poly._bn, np.zeros(keep.size)) is None:
        return EmptySet(keep.size)
    return poly


NORMS = ("l2", "l1", "linf")


def _project_l1(v: np.ndarray, r: float) -> np.ndarray:
    if np.abs(v).sum() <= r:
        return v.copy()
    a = np.sort(np.abs(v))[::-1]
    cs = np.cumsum(a)
    k = np.arange(1, a.size + 1)
    rho = np.nonzero(a * k > cs - r)[0][-1]
    theta = (cs[rho] - r) / (rho + 1)
    return np.sign(v) * np.maximum(np.abs(v) - theta, 0.0)


def _norm(v, kind: str, axis=None):
    if kind == "l2":
        return np.linalg.norm(v, axis=axis)
    if kind == "l1":
        return np.abs(v).sum(axis=axis)
    return np.abs(v).max(axis=axis)


@dataclass(frozen=True, eq=False)
class Ball(ConvexSet):
    center: np.ndarray
    radius: float
    norm: str = "l2"

    def __post_init__(self):
        object.__setattr__(self, "center", _vec(self.center))
        if self.norm not in NORMS:
            raise ValueError(f"unknown norm {self.norm!r}")
        if not self.radius >= 0:
            raise ValueError("ball radius must be nonnegative")
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def dim(self) -> int:
        return self.center.size

    def contains(self, x, tol=MEMBER_TOL):
        x = _vec(x, self.dim)
        return bool(_norm(x - self.center, self.norm) <= self.radius + tol)

    def contains_batch(self, X, tol=MEMBER_TOL):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return _norm(X - self.center, self.norm, axis=1) <= self.radius + tol

    def project(self, x, tol=PROJ_TOL):
        x = _vec(x, self.dim)
        d = x - self.center
        if self.norm == "l2":
            nd = np.linalg.norm(d)
            if nd <= self.radius:
                return x.copy()
            return self.center + d * (self.radius / nd)
        if self.norm == "linf":
            return self.center + np.clip(d, -self.radius, self.radius)
        return self.center + _project_l1(d, self.radius)

    def bounds(self):
        return self.center - self.radius, self.center + self.radius

    def is_polyhedral(self):
        return self.norm != "l2"

    def halfspaces(self):
        n = self.dim
        if self.norm == "linf":
            return Box(self.center - self.radius, self.center + self.radius).halfspaces()
        if self.norm == "l1":
            signs = np.array(np.meshgrid(*[[-1.0, 1.0]] * n, indexing="ij")).reshape(n, -1).T
            A = signs / np.sqrt(n)
            return A, (signs @ self.center + self.radius) / np.sqrt(n)
        raise TypeError("l2 ball is not polyhedral")

    def to_dict(self):
        return {"type": "ball", "center": self.center.tolist(), "radius": self.radius, "norm": self.norm}

    def _slice(self, keep, fix, values):
        off = values - self.center[fix]
        if self.norm == "l2":
            r2 = self.radius**2 - off @ off
            if r2 < -MEMBER_TOL:
                return EmptySet(keep.size)
            return Ball(self.center[keep], np.sqrt(max(r2, 0.0)), "l2")
        if self.norm == "l1":
            r = self.radius - np.abs(off).sum()
        else:
            r = self.radius if np.abs(off).max(initial=0.0) <= self.radius + MEMBER_TOL else -1.0
        if r < -MEMBER_TOL:
            return EmptySet(keep.size)
        return Ball(self.center[keep], max(r, 0.0), self.norm)


def min_norm_point(Q: np.ndarray, tol: float = 1e-12, max_iter: int = 2000):
    """Wolfe's active-set method: the minimum-norm point of conv(rows of Q).

    Returns the point and the convex weights over the rows.
    """
    k = Q.shape[0]
    sq = np.einsum("ij,ij->i", Q, Q)
    scale = max(sq.max(), 1e-300)
    S = [int(np.argmin(sq))]
    lam = np.array([1.0])
    x = Q[S[0]].copy()
    for _ in range(max_iter):
        dots = Q @ x
        j = int(np.argmin(dots))
        if x @ x - dots[j] <= tol * scale or j in S:
            break
        S.append(j)
        lam = np.append(lam, 0.0)
        while True:
            QS = Q[S]
            K = len(S)
            M = np.zeros((K + 1, K + 1))
            M[:K, :K] = QS @ QS.T
            M[:K, K] = 1.0
            M[K, :K] = 1.0
            rhs = np.zeros(K + 1)
            rhs[K] = 1.0
            alpha = np.linalg.lstsq(M, rhs, rcond=None)[0][:K]
            if np.all(alpha > 1e-14):
                lam = alpha
                break
            mask = (alpha <= 1e-14) & (lam - alpha > 0)
            if not mask.any():
                lam = np.clip(alpha, 0, None)
                lam /= lam.sum()
                break
            theta = np.min(lam[mask] / (lam[mask] - alpha[mask]))
            lam = lam + theta * (alpha - lam)
            keep = lam > 1e-14
            S = [s for s, kp in zip(S, keep) if kp]
            lam = lam[keep]
            lam /= lam.sum()
        x = lam @ Q[S]
    w = np.zeros(k)
    w[S] = lam
    return x, w


@dataclass(frozen=True, eq=False)
class Hull(ConvexSet):
    """Convex hull of finitely many points (at most 200)."""

    points: np.ndarray
    _facets: list = field(init=False, repr=False, default_factory=list)

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.points, dtype=float))
        if P.shape[0] == 0:
            raise ValueError("hull needs at least one point")
        if P.shape[0] > 200:
            raise ValueError("hull is limited to 200 points")
        object.__setattr__(self, "points", P)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def facets(self):
        """Halfspace description (unit rows) when the hull is full-dimensional."""
        if not self._facets:
            value = None
            P = self.points
            if P.shape[0] > self.dim and np.linalg.matrix_rank(P - P[0], tol=1e-10) == self.dim:
                from scipy.spatial import ConvexHull

                if self.dim == 1:
                    value = (np.array([[1.0], [-1.0]]), np.array([P.max(), -P.min()]))
                else:
                    eq = ConvexHull(P).equations
                    value = (eq[:, :-1], -eq[:, -1])
            self._facets.append(value)
        return self._facets[0]

    def contains(self, x, tol=MEMBER_TOL):
        x = _vec(x, self.dim)
        E = np.vstack([self.points.T, np.ones(self.points.shape[0])])
        _, res = nnls(E, np.append(x, 1.0), maxiter=50 * E.shape[1])
        return bool(res <= tol)

    def contains_batch(self, X, tol=MEMBER_TOL):
        F = self.facets()
        if F is None:
            return super().contains_batch(X, tol)
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return (X @ F[0].T - F[1]).max(axis=1) <= tol

    def project(self, x, tol=PROJ_TOL):
        x = _vec(x, self.dim)
        q, _ = min_norm_point(self.points - x)
        return x + q

    def bounds(self):
        return self.points.min(axis=0), self.points.max(axis=0)

    def to_dict(self):
        return {"type": "hull", "points": self.points.tolist()}

    def _slice(self, keep, fix, values):
        F = self.facets()
        if F is None:
            return None
        return _slice_halfspaces(F[0], F[1], keep, fix, values)


@dataclass(frozen=True, eq=False)
class ConvexSublevel(ConvexSet):
    """``{x : g(x) <= c}`` for a quasi-convex g with a strictly interior point."""

    g: ObjectiveExpr
    c: float
    interior: np.ndarray
    dim: int = 0

    def __post_init__(self):
        interior = _vec(self.interior)
        object.__setattr__(self, "interior", interior)
        object.__setattr__(self, "c", float(self.c))
        if not self.dim:
            object.__setattr__(self, "dim", interior.size)
        if interior.size != self.dim or self.g.arity > self.dim:
            raise ValueError("sublevel dimensions are inconsistent")
        if not self._g(interior) < self.c - 1e-9:
            raise ValueError("interior point does not satisfy g(interior) < c - 1e-9")

    def _g(self, x) -> float:
        try:
            return self.g.evaluate(x)
        except (ExprDomainError, ZeroDivisionError, OverflowError):
            return np.inf

    def contains(self, x, tol=MEMBER_TOL):
        x = _vec(x, self.dim)
        return bool(self._g(x) <= self.c + tol)

    def contains_batch(self, X, tol=MEMBER_TOL):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        v = self.g.evaluate_batch(X, errors="nan")
        return np.nan_to_num(v, nan=np.inf) <= self.c + tol

    def _boundary(self, p: np.ndarray) -> np.ndarray:
        """Last feasible point on the segment from the interior point to p."""
        lo, hi = 0.0, 1.0
        d = p - self.interior
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if self._g(self.interior + mid * d) <= self.c:
                lo = mid
            else:
                hi = mid
        return self.interior + lo * d

    def project(self, x, tol=PROJ_TOL, max_iter: int = 2000):
        x = _vec(x, self.dim)
        if self.contains(x, 0.0):
            return x.copy()
        cuts_A: list[np.ndarray] = []
        cuts_b: list[float] = []
        best = self._boundary(x)
        best_d = np.linalg.norm(best - x)
        p = x
        for _ in range(max_iter):
            z = self._boundary(p)
            dz = np.linalg.norm(z - x)
            if dz < best_d:
                best, best_d = z, dz
            _, gz = self.g.value_and_gradient(z, warn=False)
            ng = np.linalg.norm(gz)
            if ng > 0 and np.all(np.isfinite(gz)):
                a = gz / ng
                cuts_A.append(a)
                cuts_b.append(float(a @ z))
            if not cuts_A:
                break
            A = np.array(cuts_A)
            b = np.array(cuts_b)
            p_new = _project_halfspaces(A, b, x)
            if p_new is None:
                break
            lower = np.linalg.norm(p_new - x)
            if best_d - lower <= tol * 1e-2 or np.linalg.norm(p_new - p) <= 1e-15:
                break
            # move the next query toward the current lower bound, which keeps
            # cuts concentrated near the true projection
            p = p_new
        else:
            raise ProjectionError("sublevel projection did not converge", best, best_d)
        return best

    def check_convexity(self, lo, hi, pairs: int = 1000, seed: int = 0) -> int:
        """Midpoint spot check on member pairs drawn from a box; returns violations."""
        rng = np.random.default_rng(seed)
        lo = _vec(lo, self.dim)
        hi = _vec(hi, self.dim)
        pts = rng.uniform(lo, hi, size=(20 * pairs, self.dim))
        pts = pts[self.contains_batch(pts)]
        if pts.shape[0] < 2:
            return 0
        i = rng.integers(0, pts.shape[0], pairs)
        j = rng.integers(0, pts.shape[0], pairs)
        mids = 0.5 * (pts[i] + pts[j])
        return int((~self.contains_batch(mids, 1e-9)).sum())

    def to_dict(self):
        return {"type": "sublevel", "g": self.g.text, "c": self.c, "interior": self.interior.tolist()}

    def _slice(self, keep, fix, values):
        fixed = {int(i): float(v) for i, v in zip(fix, values)}
        gs = self.g.restrict(list(keep), fixed)
        start = self.interior[keep]
        start = np.where(np.isfinite(start), start, 0.0)

        def f(y):
            try:
                return gs.evaluate(y)
            except (ExprDomainError, ZeroDivisionError, OverflowError):
                return 1e300

        if f(start) < self.c - 1e-9:
            return ConvexSublevel(gs, self.c, start, keep.size)
        res = minimize(f, start, method="Nelder-Mead", options={"maxfev": 4000, "xatol": 1e-10, "fatol": 1e-14})
        if not res.fun < self.c - 1e-9:
            return None
        # the minimizer can run off far away; walk back toward the start while
        # keeping half of the achieved slack so bisections stay well scaled
        target = self.c - 0.5 * (self.c - res.fun)
        lo, hi = 0.0, 1.0
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if f(start + mid * (res.x - start)) <= target:
                hi = mid
            else:
                lo = mid
        return ConvexSublevel(gs, self.c, start + hi * (res.x - start), keep.size)


@dataclass(frozen=True, eq=False)
class Intersection(ConvexSet):
    sets: tuple

    def __post_init__(self):
        sets = tuple(self.sets)
        if not sets:
            raise ValueError("intersection of nothing")
        if len({s.dim for s in sets}) != 1:
            raise ValueError("intersected sets differ in dimension")
        object.__setattr__(self, "sets", sets)

    @property
    def dim(self) -> int:
        return self.sets[0].dim

    def contains(self, x, tol=MEMBER_TOL):
        x = _vec(x, self.dim)
        return all(s.contains(x, tol) for s in self.sets)

    def contains_batch(self, X, tol=MEMBER_TOL):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        ok = np.ones(X.shape[0], dtype=bool)
        for s in self.sets:
            ok &= s.contains_batch(X, tol)
        return ok

    def is_polyhedral(self):
        return all(s.is_polyhedral() for s in self.sets)

    def halfspaces(self):
        parts = [s.halfspaces() for s in self.sets]
        return np.vstack([p[0] for p in parts]), np.concatenate([p[1] for p in parts])

    def _merged(self) -> list:
        """Merge polyhedral members into a single Polyhedron."""
        poly = [s for s in self.sets if s.is_polyhedral()]
        rest = [s for s in self.sets if not s.is_polyhedral()]
        if len(poly) > 1:
            A = np.vstack([s.halfspaces()[0] for s in poly])
            b = np.concatenate([s.halfspaces()[1] for s in poly])
            poly = [Polyhedron(A, b)]
        return poly + rest

    def project(self, x, tol=PROJ_TOL):
        x = _vec(x, self.dim)
        parts = self._merged()
        if len(parts) == 1:
            return parts[0].project(x, tol)
        return dykstra(parts, x, tol)

    def bounds(self):
        lo = np.full(self.dim, -np.inf)
        hi = np.full(self.dim, np.inf)
        for s in self.sets:
            a, b = s.bounds()
            lo, hi = np.maximum(lo, a), np.minimum(hi, b)
        return lo, hi

    def to_dict(self):
        return {"type": "intersection", "sets": [s.to_dict() for s in self.sets]}

    def _slice(self, keep, fix, values):
        parts = []
        for s in self.sets:
            sl = s._slice(keep, fix, values)
            if sl is None:
                return None
            if isinstance(sl, EmptySet):
                return sl
            parts.append(sl)
        return parts[0] if len(parts) == 1 else Intersection(tuple(parts))


def dykstra(sets: Sequence[ConvexSet], x, tol: float = PROJ_TOL, max_iter: int = MAX_ITER) -> np.ndarray:
    """Cyclic Dykstra projection onto the intersection of ``sets``."""
    y = _vec(x).copy()
    incr = [np.zeros_like(y) for _ in sets]
    for _ in range(max_iter):
        prev = y
        moved = 0.0
        for i, s in enumerate(sets):
            z = s.project(y + incr[i], tol * 1e-2)
            new = y + incr[i] - z
            moved = max(moved, float(np.linalg.norm(new - incr[i])))
            incr[i] = new
            y = z
        # y can sit still for several sweeps while the increments still move
        if max(moved, np.linalg.norm(y - prev)) <= tol * 1e-3 and all(s.contains(y, tol) for s in sets):
            return y
    viol = max(s.distance(y) for s in sets)
    if viol > 1e3 * tol:
        raise EmptySetError("alternating projections stall: intersection looks empty")
    raise ProjectionError("Dykstra iteration cap reached", y, viol)


def set_from_dict(d: dict, dim: int | None = None) -> ConvexSet:
    """Build a ConvexSet from its game-file description."""

    def arr(v):
        return np.array([float(a) for a in v], dtype=float)

    kind = d.get("type")
    if kind == "box":
        return Box(arr(d["lo"]), arr(d["hi"]))
    if kind == "polyhedron":
        return Polyhedron(np.array(d["A"], dtype=float), arr(d["b"]))
    if kind == "ball":
        return Ball(arr(d["center"]), float(d["radius"]), d.get("norm", "l2"))
    if kind == "hull":
        return Hull(np.array(d["points"], dtype=float))
    if kind == "sublevel":
        interior = arr(d["interior"])
        n = dim or interior.size
        return ConvexSublevel(parse_expression(d["g"], n), float(d["c"]), interior, n)
    if kind == "intersection":
        return Intersection(tuple(set_from_dict(s, dim) for s in d["sets"]))
    if kind == "empty":
        return EmptySet(int(d["dim"]))
    raise ValueError(f"unknown set type {kind!r}")


# ---------------------------------------------------------------------------
# blocks, slices, cross set


@dataclass(frozen=True)
class BlockStructure:
    dims: tuple

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if not dims or any(d <= 0 for d in dims):
            raise ValueError("block dimensions must be positive")
        object.__setattr__(self, "dims", dims)

    @property
    def players(self) -> int:
        return len(self.dims)

    @property
    def n(self) -> int:
        return sum(self.dims)

    @property
    def offsets(self) -> tuple:
        return tuple(int(v) for v in np.concatenate([[0], np.cumsum(self.dims)]))

    def index(self, nu: int) -> np.ndarray:
        o = self.offsets
        return np.arange(o[nu], o[nu + 1])

    def rival_index(self, nu: int) -> np.ndarray:
        own = set(self.index(nu).tolist())
        return np.array([i for i in range(self.n) if i not in own], dtype=int)

    def block(self, x, nu: int) -> np.ndarray:
        return _vec(x, self.n)[self.index(nu)]

    def rivals(self, x, nu: int) -> np.ndarray:
        return _vec(x, self.n)[self.rival_index(nu)]

    def split(self, x) -> list:
        x = _vec(x, self.n)
        return [x[self.index(nu)] for nu in range(self.players)]

    def assemble(self, y, x_minus, nu: int) -> np.ndarray:
        out = np.empty(self.n)
        out[self.index(nu)] = _vec(y, self.dims[nu])
        out[self.rival_index(nu)] = _vec(x_minus, self.n - self.dims[nu])
        return out

    def replace(self, x, y, nu: int) -> np.ndarray:
        out = _vec(x, self.n).copy()
        out[self.index(nu)] = _vec(y, self.dims[nu])
        return out

    def assemble_batch(self, Y, x_minus, nu: int) -> np.ndarray:
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        out = np.empty((Y.shape[0], self.n))
        out[:, self.index(nu)] = Y
        out[:, self.rival_index(nu)] = _vec(x_minus)
        return out


class SliceSet(ConvexSet):
    """The own-strategy set of player ``nu`` when rivals play ``fixed``."""

    def __init__(self, parent: ConvexSet, blocks: BlockStructure, nu: int, fixed):
        if parent.dim != blocks.n:
            raise ValueError("set dimension differs from the block structure")
        self.parent = parent
        self.blocks = blocks
        self.nu = nu
        self.fixed = _vec(fixed, blocks.n - blocks.dims[nu])
        self.dim = blocks.dims[nu]
        self._keep = blocks.index(nu)
        self._fix = blocks.rival_index(nu)
        self.materialized = parent._slice(self._keep, self._fix, self.fixed)

    def full(self, y) -> np.ndarray:
        return self.blocks.assemble(y, self.fixed, self.nu)

    def contains(self, y, tol=MEMBER_TOL):
        return self.parent.contains(self.full(y), tol)

    def contains_batch(self, Y, tol=MEMBER_TOL):
        return self.parent.contains_batch(self.blocks.assemble_batch(Y, self.fixed, self.nu), tol)

    def is_empty(self) -> bool:
        if isinstance(self.materialized, EmptySet):
            return True
        try:
            self.project(np.zeros(self.dim))
        except EmptySetError:
            return True
        return False

    def project(self, y, tol=PROJ_TOL):
        y = _vec(y, self.dim)
        if self.materialized is not None:
            return self.materialized.project(y, tol)
        z = self.full(y)
        incr = np.zeros_like(z)
        for _ in range(MAX_ITER):
            prev = z
            w = self.parent.project(z + incr, tol * 1e-2)
            incr = z + incr - w
            z = w.copy()
            z[self._fix] = self.fixed
            if np.linalg.norm(z - prev) <= tol * 1e-3:
                break
        if not self.parent.contains(z, max(tol, 1e-7)):
            raise EmptySetError("slice is empty")
        return z[self._keep]

    def bounds(self):
        if self.materialized is not None:
            return self.materialized.bounds()
        lo, hi = self.parent.bounds()
        return lo[self._keep], hi[self._keep]

    def to_dict(self):
        return {"type": "slice", "parent": self.parent.to_dict(), "player": self.nu, "fixed": self.fixed.tolist()}


def slice_set(S: ConvexSet, B: BlockStructure, nu: int, x_minus) -> SliceSet:
    return SliceSet(S, B, nu, x_minus)


def block_rectangle_min_norm(S: ConvexSet, B: BlockStructure, x, windows=None) -> tuple[np.ndarray, float]:
    """Minimum-norm element of the product of all slices at x.

    The product structure makes this separable: every block projects the
    origin onto its own slice.
    """
    x = _vec(x, B.n)
    out = np.empty(B.n)
    for nu in range(B.players):
        sl = SliceSet(S, B, nu, B.rivals(x, nu))
        try:
            out[B.index(nu)] = sl.project(np.zeros(B.dims[nu]))
        except EmptySetError as exc:
            raise AssertionError("slice through a member of S cannot be empty") from exc
    return out, float(np.linalg.norm(out))


def cross_membership(S: ConvexSet, B: BlockStructure, xhat, y, tol: float = MEMBER_TOL) -> int | None:
    """Player whose one-block deviation from xhat gives y, if y is feasible.

    Returns None when y differs from xhat in more than one block or leaves S.
    """
    xhat = _vec(xhat, B.n)
    y = _vec(y, B.n)
    for nu in range(B.players):
        r = B.rival_index(nu)
        if np.all(np.abs(y[r] - xhat[r]) <= tol):
            return nu if S.contains(y, tol) else None
    return None


@dataclass
class LscReport:
    distances: list
    gaps: list
    verdict: str
    delta: float
    witness: dict | None = None

    def to_dict(self) -> dict:
        return {
            "distances": [float(d) for d in self.distances],
            "gaps": [float(g) for g in self.gaps],
            "verdict": self.verdict,
            "delta": float(self.delta),
            "witness": self.witness,
        }


def lsc_probe(
    S: ConvexSet,
    B: BlockStructure,
    nu: int,
    x0_minus,
    z0,
    path,
    tol: float = 1e-3,
    delta: float | None = None,
) -> LscReport:
    """One-sided lower semicontinuity check of the slice map along a path.

    The verdict is LscRefuted when the distance from z0 to the slices stays at
    least delta on every path point already within tol of x0_minus.
    """
    x0_minus = _vec(x0_minus)
    z0 = _vec(z0, B.dims[nu])
    base = SliceSet(S, B, nu, x0_minus)
    if not base.contains(z0, 1e-7):
        raise ValueError("z0 is not in the slice at x0_minus")
    path = np.atleast_2d(np.asarray(path, dtype=float))
    gaps = np.linalg.norm(path - x0_minus, axis=1)
    if gaps[-1] > tol:
        raise ValueError("path does not reach x0_minus within tol")
    dists = []
    witness = None
    for k, xm in enumerate(path):
        sl = SliceSet(S, B, nu, xm)
        try:
            dists.append(float(np.linalg.norm(z0 - sl.project(z0))))
        except EmptySetError:
            dists.append(float("inf"))
            if witness is None:
                witness = {"index": k, "rivals": xm.tolist(), "reason": "empty slice"}
    d1 = dists[0]
    if delta is None:
        delta = 0.5 * d1 if np.isfinite(d1) else 1.0
    tail = [d for d, g in zip(dists, gaps) if g <= tol]
    refuted = bool(tail) and min(tail) >= max(delta, 1e-6)
    if refuted and witness is None:
        k = int(np.argmin(gaps))
        witness = {"index": k, "rivals": path[k].tolist(), "distance": dists[k]}
    return LscReport(dists, gaps.tolist(), "LscRefuted" if refuted else "ConsistentWithLsc", float(delta),
                     witness if refuted else None)
