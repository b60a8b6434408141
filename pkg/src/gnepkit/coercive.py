"""Coerciveness conditions at a radius and the truncate-solve-certify pipeline.

Every condition asks, for each outer profile x, whether some y exists in an
admissible set (level sets intersected with X or with the slices at x) with a
norm bound. The admissible sets are convex, so each inner question becomes a
minimum-norm search; a refutation needs the search to fail on a ray,
a local pattern search and a dense low-discrepancy grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .game import RosenGame
from .geometry import Ball, EmptySetError, Intersection, block_rectangle_min_norm
from .levelsets import LEVEL_EPS
from .nash import VERIFY_TOL, solve, verify_equilibrium
from .sampling import halton, unit_directions
from .vi import SolveResult

CONDITIONS = ("C0", "C1", "C2", "C3")
STRICT_MARGIN = 1e-9
SPHERE_TOL = 1e-6


@dataclass
class CoerciveVerdict:
    condition: str
    rho: float
    verdict: str
    witness_x: np.ndarray | None = None
    inner_best: np.ndarray | None = None
    inner_norm: float | None = None
    violated: str | None = None
    samples_used: int = 0
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        def arr(v):
            return None if v is None else [float(a) for a in v]

        return {
            "condition": self.condition,
            "rho": float(self.rho),
            "verdict": self.verdict,
            "witness_x": arr(self.witness_x),
            "inner_best": arr(self.inner_best),
            "inner_norm": None if self.inner_norm is None else float(self.inner_norm),
            "violated": self.violated,
            "samples_used": int(self.samples_used),
            "notes": list(self.notes),
        }


# ---------------------------------------------------------------------------
# inner search


def _min_norm_search(member, start: np.ndarray, R: float, budget: int, seed: int):
    """Smallest-norm admissible point found from ``start`` (itself admissible).

    ``member`` maps a batch of points to an admissibility mask. The search
    walks the ray toward the origin, runs a shrinking pattern search, and
    scans a low-discrepancy grid of ``budget`` points in the box [-R, R]^d.
    """
    d = start.size
    best = start.copy()
    best_n = float(np.linalg.norm(best))

    def ray(p):
        # admissible t form an interval containing 1; find its left end
        if member(np.zeros((1, d)))[0]:
            return np.zeros(d)
        lo, hi = 0.0, 1.0
        grid = np.linspace(0.0, 1.0, 34)[1:-1]
        for _ in range(12):
            ts = lo + grid * (hi - lo)
            ok = member(ts[:, None] * p[None, :])
            j = int(np.argmax(ok)) if ok.any() else ts.size
            new_lo = ts[j - 1] if j > 0 else lo
            new_hi = ts[j] if j < ts.size else hi
            if new_hi - new_lo >= hi - lo:
                break
            lo, hi = new_lo, new_hi
        return hi * p

    def consider(P):
        nonlocal best, best_n
        if P.shape[0] == 0:
            return False
        ok = member(P)
        if not ok.any():
            return False
        Q = P[ok]
        nq = np.linalg.norm(Q, axis=1)
        i = int(np.argmin(nq))
        if nq[i] < best_n - 1e-15:
            best, best_n = Q[i].copy(), float(nq[i])
            return True
        return False

    consider(ray(best)[None, :])
    if budget > 0:
        consider(halton(budget, -R * np.ones(d), R * np.ones(d), seed))
        consider(ray(best)[None, :])
    step = max(R, best_n, 1e-3) / 4.0
    dirs = np.vstack([np.eye(d), -np.eye(d)])
    rng = np.random.default_rng(seed)
    for _ in range(400):
        if step < 1e-13 * max(1.0, best_n):
            break
        extra = unit_directions(2 * d, d, rng)
        cand = best + step * np.vstack([dirs, extra])
        if best_n > 0:
            cand = np.vstack([cand, best * (1.0 - step / best_n)])
        if consider(cand):
            consider(ray(best)[None, :])
        else:
            step *= 0.5
    return best, best_n


# ---------------------------------------------------------------------------
# outer samples


def _in_window(game: RosenGame, P: np.ndarray) -> np.ndarray:
    lo, hi = game.full_window()
    return np.all((P >= lo - 1e-12) & (P <= hi + 1e-12), axis=1)


def _sphere_points(game: RosenGame, rho: float, budget: int, seed: int) -> np.ndarray:
    """Points of X on the sphere of radius rho inside the windows."""
    X = game.X
    n = game.n
    rng = np.random.default_rng(seed)
    D = unit_directions(budget, n, rng)
    S = rho * D
    inside = X.contains_batch(S, 0.0) & _in_window(game, S)
    pts = [S[inside]]
    outside = S[~inside]
    rescaled = []
    for p in outside:
        try:
            q = X.project(p)
        except EmptySetError:
            continue
        nq = np.linalg.norm(q)
        if nq > 0:
            q = rho * q / nq
            if X.contains(q, 0.0) and abs(np.linalg.norm(q) - rho) <= SPHERE_TOL:
                rescaled.append(q)
    if rescaled:
        R = np.array(rescaled)
        pts.append(R[_in_window(game, R)])
    good = np.vstack(pts) if pts else np.zeros((0, n))
    # great-circle bisection between members and non-members lands on the
    # relative boundary of X within the sphere
    if good.shape[0] and outside.shape[0]:
        bnd = []
        for o in outside[: max(1, budget // 4)]:
            g = good[int(np.argmax(good @ o))]
            a, b = 0.0, 1.0
            for _ in range(80):
                m = 0.5 * (a + b)
                v = (1 - m) * g + m * o
                v = rho * v / np.linalg.norm(v)
                if X.contains(v, 0.0) and _in_window(game, v[None, :])[0]:
                    a = m
                else:
                    b = m
            v = (1 - a) * g + a * o
            bnd.append(rho * v / np.linalg.norm(v))
        good = np.vstack([good, np.array(bnd)])
    return good


def _exterior_points(game: RosenGame, rho: float, budget: int, seed: int) -> np.ndarray:
    lo, hi = game.full_window()
    P = halton(8 * budget, lo, hi, seed)
    P = P[game.X.contains_batch(P, 0.0) & (np.linalg.norm(P, axis=1) > rho)]
    return P[:budget]


# ---------------------------------------------------------------------------
# conditions


def _level_ok(game: RosenGame, nu: int, Z: np.ndarray, bound: float) -> np.ndarray:
    v = game.theta_batch(nu, Z)
    return ~np.isnan(v) & (v <= bound + LEVEL_EPS)


def _joint_inner(game: RosenGame, x: np.ndarray, rho: float, budget: int, seed: int):
    """C0: y in X with every mixed profile no worse than x."""
    B = game.blocks
    f = [game.theta(nu, x) for nu in range(B.players)]

    def member(Y):
        ok = game.X.contains_batch(Y, 0.0)
        for nu in range(B.players):
            Z = np.tile(x, (Y.shape[0], 1))
            Z[:, B.index(nu)] = Y[:, B.index(nu)]
            ok &= _level_ok(game, nu, Z, f[nu])
        return ok

    y, ny = _min_norm_search(member, x.copy(), rho, budget, seed)
    ok = ny < rho - STRICT_MARGIN
    return ok, y, ny, None if ok else "norm(y) < rho"


def _block_inner(game: RosenGame, x: np.ndarray, nu: int, R: float, budget: int, seed: int):
    """Smallest own-block norm over the slice intersected with the level set."""
    B = game.blocks
    xm = B.rivals(x, nu)
    f = game.theta(nu, x)

    def member(Y):
        Z = B.assemble_batch(Y, xm, nu)
        return game.X.contains_batch(Z, 0.0) & _level_ok(game, nu, Z, f)

    return _min_norm_search(member, B.block(x, nu), R, budget, seed + 17 * nu)


def inner_check(game: RosenGame, which: str, x, rho: float, budget: int, seed: int = 0):
    """Whether an admissible y exists for outer x: (found, y, norm, violated)."""
    which = which.upper()
    x = np.asarray(x, dtype=float)
    B = game.blocks
    if which == "C0":
        return _joint_inner(game, x, rho, budget, seed)
    per = max(1, budget // B.players)
    y = np.empty(B.n)
    norms = []
    violated = None
    for nu in range(B.players):
        rest2 = float(np.sum(B.rivals(x, nu) ** 2))
        cap2 = rho**2 - rest2
        R = np.sqrt(max(cap2, 0.0)) if which in ("C1", "C2") else rho
        yb, nb = _block_inner(game, x, nu, max(R, 1e-12), per, seed)
        y[B.index(nu)] = yb
        norms.append(nb)
        if which == "C1" and not (nb**2 + rest2 < (rho - STRICT_MARGIN) ** 2):
            violated = violated or f"(y^{nu + 1}, x^-{nu + 1}) in open ball"
        if which == "C2" and not (nb**2 + rest2 <= (rho + STRICT_MARGIN) ** 2):
            violated = violated or f"(y^{nu + 1}, x^-{nu + 1}) in closed ball"
    total = float(np.sqrt(sum(v**2 for v in norms)))
    if which == "C3" and not total < rho - STRICT_MARGIN:
        violated = "norm(y) < rho"
    return violated is None, y, total, violated


def check_condition(
    game: RosenGame,
    which: str,
    rho: float,
    budget: int = 200,
    seed: int = 0,
    probes=None,
    inner_factor: int = 10,
) -> CoerciveVerdict:
    """Sample outer profiles for a coerciveness condition and search inner witnesses.

    Outer samples are restricted to the game's windows. ``probes`` are extra
    outer candidates tried first (after filtering them to the condition's
    domain).
    """
    which = which.upper()
    if which not in CONDITIONS:
        raise ValueError(f"unknown condition {which!r}")
    if not rho > 0:
        raise ValueError("rho must be positive")
    try:
        p0 = game.X.project(np.zeros(game.n))
    except EmptySetError:
        return CoerciveVerdict(which, rho, "PreconditionFailed", notes=["X is empty"])
    if np.linalg.norm(p0) > rho + 1e-9:
        return CoerciveVerdict(which, rho, "PreconditionFailed",
                               notes=[f"X misses the closed ball: nearest point has norm {np.linalg.norm(p0):.6g}"])
    if which in ("C0", "C1"):
        outer = _sphere_points(game, rho, budget, seed)
    else:
        outer = _exterior_points(game, rho, budget, seed)
    if probes is not None and len(probes):
        P = np.atleast_2d(np.asarray(probes, dtype=float))
        if which in ("C0", "C1"):
            keep = np.abs(np.linalg.norm(P, axis=1) - rho) <= SPHERE_TOL
        else:
            keep = np.linalg.norm(P, axis=1) > rho
        keep &= game.X.contains_batch(P, 0.0)
        outer = np.vstack([P[keep], outer])
    inner_budget = inner_factor * max(budget, 1)
    for i, x in enumerate(outer):
        found, y, ny, violated = inner_check(game, which, x, rho, inner_budget, seed)
        if not found:
            return CoerciveVerdict(which, rho, "Refuted", x.copy(), y, ny, violated, i + 1)
    return CoerciveVerdict(which, rho, "ConsistentAtBudget", samples_used=int(outer.shape[0]))


def implication_audit(game: RosenGame, rho: float, budget: int = 200, seed: int = 0,
                      x_equals_k: bool = False, probes=None) -> dict:
    """Empirical check of C2 at rho implying C1 at 2 rho, and of C1 implying C0."""
    c2 = check_condition(game, "C2", rho, budget, seed)
    c1 = check_condition(game, "C1", 2 * rho, budget, seed)
    out = {
        "rho": float(rho),
        "c2": c2.to_dict(),
        "c1_at_2rho": c1.to_dict(),
        "anomaly": c2.verdict == "ConsistentAtBudget" and c1.verdict == "Refuted",
    }
    if x_equals_k:
        c1r = check_condition(game, "C1", rho, budget, seed)
        c0r = check_condition(game, "C0", rho, budget, seed)
        out["c1_c0"] = {
            "c1": c1r.to_dict(),
            "c0": c0r.to_dict(),
            "anomaly": c1r.verdict == "ConsistentAtBudget" and c0r.verdict == "Refuted",
        }
    else:
        out["c1_c0"] = {"skipped": True, "reason": "X≠K"}
    try:
        p0 = game.X.project(np.zeros(game.n))
        out["item1"] = {"passes": bool(np.linalg.norm(p0) <= rho + 1e-9), "nearest_norm": float(np.linalg.norm(p0))}
    except EmptySetError:
        out["item1"] = {"passes": False, "nearest_norm": None}
    info = []
    for x in (probes if probes is not None else []):
        x = np.asarray(x, dtype=float)
        if not game.X.contains(x):
            continue
        y, ny = block_rectangle_min_norm(game.X, game.blocks, x, game.windows)
        info.append({"x": x.tolist(), "min_norm_element": y.tolist(), "norm": ny,
                     "product_meets_ball": bool(ny <= rho + 1e-9)})
    out["probes"] = info
    return out


def solve_unbounded(
    game: RosenGame,
    rho0: float = 1.0,
    growth: float = 2.0,
    max_rounds: int = 10,
    method: str = "svi",
    tol: float = VERIFY_TOL,
    seed: int = 0,
) -> tuple[SolveResult, object, list]:
    """Solve truncations X ∩ ball(rho) for growing rho; certify on the full game.

    Returns the chosen result, its full-game certificate, and a per-round log.
    """
    rho = float(rho0)
    log = []
    best = None
    for k in range(1, max_rounds + 1):
        ball = Ball(np.zeros(game.n), rho)
        trunc = game.with_set(Intersection((game.X, ball)), f"{game.name}@rho={rho:g}")
        try:
            res, _ = solve(trunc, method, seed=seed, verify_tol=tol)
        except (EmptySetError, ValueError) as exc:
            log.append({"round": k, "rho": rho, "error": str(exc)})
            rho *= growth
            continue
        cert = verify_equilibrium(game, res.point, tol, seed=seed)
        log.append({"round": k, "rho": rho, "point": res.point.tolist(), "max_regret": cert.max_regret,
                    "verdict": cert.verdict, "solver_converged": res.converged})
        if best is None or cert.max_regret < best[1].max_regret:
            best = (res, cert)
        if cert.verdict == "Certified":
            res.extra.update({"rho": rho, "round": k})
            return res, cert, log
        rho *= growth
    if best is None:
        raise EmptySetError("no truncation could be solved")
    res, cert = best
    res.converged = False
    res.message = "Uncertified: no truncated solution certified on the full game"
    return res, cert, log
