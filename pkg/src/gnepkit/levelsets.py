"""Sampled lower, strict and adjusted level sets and their normal cones.

Verdicts are one-sided: a Refuted cone test carries a re-evaluated witness,
a Consistent one only speaks for the sample.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np
from scipy.spatial import ConvexHull, QhullError, cKDTree

from .game import RosenGame
from .geometry import min_norm_point
from .sampling import halton

LEVEL_EPS = 1e-12
CONE_TOL = 1e-7
DEFAULT_BUDGET = 20_000
MIN_BUDGET = 1000
LOCAL_POINTS = 64


class LevelKind(str, Enum):
    WEAK = "Weak"
    STRICT = "Strict"
    ADJUSTED = "Adjusted"


class ConeKind(str, Enum):
    PLAIN = "Plain"
    STRICT = "Strict"
    ADJUSTED = "Adjusted"


CONE_TO_LEVEL = {
    ConeKind.PLAIN: LevelKind.WEAK,
    ConeKind.STRICT: LevelKind.STRICT,
    ConeKind.ADJUSTED: LevelKind.ADJUSTED,
}


class AtArgminError(ValueError):
    """The strict level sample is empty: the anchor may be a block argmin."""


@dataclass
class LevelSample:
    player: int
    anchor: np.ndarray
    kind: LevelKind
    points: np.ndarray
    window: tuple
    budget: int
    rho: float | None = None

    @property
    def empty(self) -> bool:
        return self.points.shape[0] == 0


@dataclass
class ConeVerdict:
    verdict: str
    kind: ConeKind
    u: np.ndarray
    margin: float | None
    witness: np.ndarray | None = None
    sample_size: int = 0

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "kind": self.kind.value,
            "u": self.u.tolist(),
            "margin": self.margin,
            "witness": None if self.witness is None else self.witness.tolist(),
            "sample_size": self.sample_size,
        }


@dataclass
class ConeDirection:
    u: np.ndarray | None
    at_argmin: bool
    margin: float | None
    certified: bool
    verdict: ConeVerdict | None = None

    def to_dict(self) -> dict:
        return {
            "u": None if self.u is None else self.u.tolist(),
            "at_argmin": self.at_argmin,
            "margin": self.margin,
            "certified": self.certified,
            "certificate": None if self.verdict is None else self.verdict.to_dict(),
        }


def _window(game: RosenGame, nu: int, window):
    if window is None:
        return game.window(nu)
    lo, hi = window
    return np.asarray(lo, dtype=float).reshape(-1), np.asarray(hi, dtype=float).reshape(-1)


@lru_cache(maxsize=64)
def _raw(game: RosenGame, nu: int, x: tuple, lo: tuple, hi: tuple, budget: int, seed: int):
    pts = halton(budget, lo, hi, seed)
    # multi-scale points around the anchor resolve level sets that are thin
    # near it; clipped to the window so verdicts stay window-relative
    xb = np.asarray(x)[game.blocks.index(nu)]
    lo_a, hi_a = np.asarray(lo), np.asarray(hi)
    unit = halton(LOCAL_POINTS, -np.ones(xb.size), np.ones(xb.size), seed + 3)
    width = float(np.max(hi_a - lo_a))
    local = [np.clip(xb + width * 10.0**-k * unit, lo_a, hi_a) for k in range(2, 12, 2)]
    pts = np.vstack([pts] + local)
    vals = game.theta_batch(nu, game.blocks.assemble_batch(pts, game.blocks.rivals(x, nu), nu))
    pts.setflags(write=False)
    vals.setflags(write=False)
    return pts, vals


def _evaluated(game, nu, x, lo, hi, budget, seed, extra):
    pts, vals = _raw(game, nu, tuple(x), tuple(lo), tuple(hi), int(budget), int(seed))
    if extra is not None and len(extra):
        E = np.atleast_2d(np.asarray(extra, dtype=float))
        ev = game.theta_batch(nu, game.blocks.assemble_batch(E, game.blocks.rivals(x, nu), nu))
        pts = np.vstack([pts, E])
        vals = np.concatenate([vals, ev])
    return pts, vals


def sample_level_set(
    game: RosenGame,
    nu: int,
    x,
    kind: LevelKind | str,
    window=None,
    budget: int = DEFAULT_BUDGET,
    seed: int = 0,
    extra_points=None,
    adjust_tol: float = 1e-9,
) -> LevelSample:
    """Low-discrepancy points of the window lying in the requested level set.

    All three kinds filter the same point set, so Strict is a subset of
    Adjusted, which is a subset of Weak.
    """
    kind = LevelKind(kind)
    if budget < MIN_BUDGET:
        raise ValueError(f"budget must be at least {MIN_BUDGET}")
    x = np.asarray(x, dtype=float).reshape(-1)
    lo, hi = _window(game, nu, window)
    f0 = game.theta(nu, x)
    pts, vals = _evaluated(game, nu, x, lo, hi, budget, seed, extra_points)
    ok = ~np.isnan(vals)
    weak = ok & (vals <= f0 + LEVEL_EPS)
    strict = ok & (vals < f0 - LEVEL_EPS)
    base = dict(player=nu, anchor=x, window=(lo, hi), budget=budget)
    if kind is LevelKind.WEAK:
        return LevelSample(kind=kind, points=pts[weak], **base)
    if kind is LevelKind.STRICT:
        return LevelSample(kind=kind, points=pts[strict], **base)
    if not strict.any():
        return LevelSample(kind=kind, points=pts[weak], **base)
    rho, near = _radius_cached(game, nu, x, pts[strict], lo, hi, budget, seed)
    proxy = np.vstack([pts[strict], near[None, :]])
    d, _ = cKDTree(proxy).query(pts[weak])
    keep = d <= rho + adjust_tol * max(1.0, rho)
    return LevelSample(kind=kind, points=pts[weak][keep], rho=rho, **base)


_RADIUS_CACHE: dict = {}


def _radius_cached(game, nu, x, strict_pts, lo, hi, budget, seed):
    key = (id(game), nu, x.tobytes(), lo.tobytes(), hi.tobytes(), budget, seed, hash(strict_pts.tobytes()))
    hit = _RADIUS_CACHE.get(key)
    if hit is None or hit[0] is not game:
        if len(_RADIUS_CACHE) > 256:
            _RADIUS_CACHE.clear()
        hit = (game, _radius(game, nu, x, strict_pts, lo, hi, budget, seed))
        _RADIUS_CACHE[key] = hit
    return hit[1]


def _radius(game, nu, x, strict_pts, lo, hi, budget, seed, rounds: int = 200):
    B = game.blocks
    xb = B.block(x, nu)
    xm = B.rivals(x, nu)
    f0 = game.theta(nu, x)

    def is_strict(P):
        v = game.theta_batch(nu, B.assemble_batch(P, xm, nu))
        return ~np.isnan(v) & (v < f0 - LEVEL_EPS)

    grid = np.linspace(0.0, 1.0, 66)[1:-1]

    def crossing(w):
        # first strict point on the segment from the anchor to w, by batched
        # multisection (64 interior points shrink the bracket 65-fold)
        lo_t, hi_t = 0.0, 1.0
        for _ in range(10):
            ts = lo_t + grid * (hi_t - lo_t)
            ok = is_strict(xb + ts[:, None] * (w - xb))
            j = int(np.argmax(ok)) if ok.any() else ts.size
            new_lo = ts[j - 1] if j > 0 else lo_t
            new_hi = ts[j] if j < ts.size else hi_t
            if new_hi - new_lo >= hi_t - lo_t:
                break
            lo_t, hi_t = new_lo, new_hi
        return xb + hi_t * (w - xb)

    d = np.linalg.norm(strict_pts - xb, axis=1)
    best = crossing(strict_pts[int(np.argmin(d))])
    r = float(np.linalg.norm(best - xb))
    n = xb.size
    rad = float(np.max(hi - lo)) / max(budget, 1) ** (1.0 / n)
    local = halton(64, -np.ones(n), np.ones(n), seed + 1)
    for _ in range(rounds):
        if rad <= 1e-12 * max(1.0, r):
            break
        cand = best + rad * local
        cand = cand[is_strict(cand)]
        if cand.shape[0]:
            dc = np.linalg.norm(cand - xb, axis=1)
            w = crossing(cand[int(np.argmin(dc))])
            rw = float(np.linalg.norm(w - xb))
            if rw < r - 1e-14:
                best, r = w, rw
                continue
        rad *= 0.5
    return r, best


def adjustment_radius(game: RosenGame, nu: int, x, window=None, budget: int = DEFAULT_BUDGET, seed: int = 0) -> float:
    """Distance from the anchor block to the strict level set, refined locally."""
    x = np.asarray(x, dtype=float).reshape(-1)
    lo, hi = _window(game, nu, window)
    s = sample_level_set(game, nu, x, LevelKind.STRICT, (lo, hi), budget, seed)
    if s.empty:
        raise AtArgminError("strict level sample is empty; the radius is undefined")
    return _radius_cached(game, nu, x, s.points, lo, hi, budget, seed)[0]


def cone_test(
    game: RosenGame,
    nu: int,
    x,
    u,
    kind: ConeKind | str,
    window=None,
    budget: int = DEFAULT_BUDGET,
    tol: float = CONE_TOL,
    seed: int = 0,
    extra_points=None,
) -> ConeVerdict:
    """Check ⟨u, w − x^ν⟩ ≤ tol over the level sample matching ``kind``."""
    kind = ConeKind(kind)
    u = np.asarray(u, dtype=float).reshape(-1)
    if not np.linalg.norm(u) > 0:
        raise ValueError("cone test needs a nonzero direction")
    x = np.asarray(x, dtype=float).reshape(-1)
    s = sample_level_set(game, nu, x, CONE_TO_LEVEL[kind], window, budget, seed, extra_points)
    if s.empty:
        return ConeVerdict("Consistent", kind, u, None, None, 0)
    xb = game.blocks.block(x, nu)
    ip = (s.points - xb) @ u
    i = int(np.argmax(ip))
    margin = float(ip[i])
    if margin > tol:
        w = s.points[i]
        # re-evaluate the witness from scratch
        f0 = game.theta(nu, x)
        fw = game.theta_safe(nu, game.blocks.replace(x, w, nu))
        level_ok = fw < f0 - LEVEL_EPS if kind is ConeKind.STRICT else fw <= f0 + LEVEL_EPS
        if level_ok and float(u @ (w - xb)) > tol:
            return ConeVerdict("Refuted", kind, u, margin, w.copy(), s.points.shape[0])
    return ConeVerdict("Consistent", kind, u, margin, None, s.points.shape[0])


def _max_margin(D: np.ndarray, rng: np.random.Generator, iters: int, restarts: int):
    """Unit u maximizing min_i −⟨u, D_i⟩ by projected subgradient ascent."""
    n = D.shape[1]
    if D.shape[0] > n + 1 and n > 1:
        try:
            D = D[ConvexHull(D).vertices]
        except QhullError:
            pass
    p, _ = min_norm_point(D)
    starts = [] if np.linalg.norm(p) < 1e-15 else [-p / np.linalg.norm(p)]
    g = rng.standard_normal((restarts, n))
    starts += list(g / np.linalg.norm(g, axis=1, keepdims=True))
    U = np.array(starts)
    margins = np.min(-(U @ D.T), axis=1)
    best_u, best_m = U.copy(), margins.copy()
    for k in range(iters):
        # all restarts advance together
        i = np.argmin(-(U @ D.T), axis=1)
        step = U - (1.0 / np.sqrt(k + 1)) * D[i]
        ns = np.linalg.norm(step, axis=1)
        move = ns > 0
        U[move] = step[move] / ns[move, None]
        m = np.min(-(U @ D.T), axis=1)
        better = m > best_m
        best_u[better], best_m[better] = U[better], m[better]
    j = int(np.argmax(best_m))
    return best_u[j], float(best_m[j])


def cone_direction(
    game: RosenGame,
    nu: int,
    x,
    kind: ConeKind | str = ConeKind.STRICT,
    window=None,
    budget: int = DEFAULT_BUDGET,
    seed: int = 0,
    iters: int = 200,
    restarts: int = 10,
    tol: float = CONE_TOL,
) -> ConeDirection:
    """Max-margin unit normal of the Strict or Adjusted level sample, certified."""
    kind = ConeKind(kind)
    if kind is ConeKind.PLAIN:
        raise ValueError("cone directions are produced for Strict and Adjusted cones only")
    x = np.asarray(x, dtype=float).reshape(-1)
    s = sample_level_set(game, nu, x, CONE_TO_LEVEL[kind], window, budget, seed)
    xb = game.blocks.block(x, nu)
    W = s.points - xb
    nrm = np.linalg.norm(W, axis=1)
    W = W[nrm > 0] / nrm[nrm > 0, None]
    if W.shape[0] == 0:
        return ConeDirection(None, True, None, True)
    rng = np.random.default_rng(seed)
    u, margin = _max_margin(W, rng, iters, restarts)
    verdict = cone_test(game, nu, x, u, kind, window, budget, tol, seed)
    return ConeDirection(u, False, margin, verdict.verdict == "Consistent", verdict)
