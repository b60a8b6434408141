"""Variational-inequality layer: maps, extragradient solver, Minty testers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .game import RosenGame
from .geometry import ConvexSet, EmptySetError
from .levelsets import CONE_TOL, ConeKind, LevelKind, cone_direction, cone_test, sample_level_set
from .sampling import halton, unit_directions

GAMMA_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class GradientStack:
    """Stacked own-block gradients of every player's objective."""

    game: RosenGame


@dataclass(frozen=True, eq=False)
class QcStrict:
    """Max-margin unit normals of the strict level sets, zero at block argmins."""

    game: RosenGame
    windows: tuple | None = None
    budget: int = 2000
    seed: int = 0

    kind = ConeKind.STRICT


@dataclass(frozen=True, eq=False)
class QcAdjusted(QcStrict):
    """Same selection built from the adjusted level sets."""

    kind = ConeKind.ADJUSTED


ViMap = GradientStack | QcStrict | QcAdjusted


@dataclass(frozen=True, eq=False)
class FunctionMap:
    """An arbitrary map given as a Python callable (tests and sanity cases)."""

    fn: object

    def __call__(self, x):
        return np.asarray(self.fn(x), dtype=float)


def map_eval(M, x) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    if isinstance(M, FunctionMap):
        return M(x)
    game = M.game
    B = game.blocks
    out = np.zeros(B.n)
    for nu in range(B.players):
        idx = B.index(nu)
        if isinstance(M, GradientStack):
            out[idx] = game.gradient(nu, x, warn=False)
        else:
            win = None if M.windows is None else M.windows[nu]
            if M.kind is ConeKind.ADJUSTED and sample_level_set(
                game, nu, x, LevelKind.STRICT, win, M.budget, M.seed
            ).empty:
                # block argmin: the whole unit ball is admissible, pick zero
                continue
            d = cone_direction(game, nu, x, M.kind, win, M.budget, M.seed)
            if not d.at_argmin:
                out[idx] = d.u
    return out


def map_eval_batch(M, X) -> np.ndarray:
    """Row-wise map values; unevaluable rows come back as nan."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if isinstance(M, GradientStack):
        game = M.game
        B = game.blocks
        out = np.empty_like(X)
        for nu in range(B.players):
            _, G, bad = game.objectives[nu].gradient_batch(X)
            idx = B.index(nu)
            out[:, idx] = G[:, idx]
            out[bad] = np.nan
        return out
    rows = []
    for x in X:
        try:
            rows.append(map_eval(M, x))
        except ArithmeticError:
            rows.append(np.full(X.shape[1], np.nan))
    return np.array(rows)


def svi_residual(M, S: ConvexSet, x, gamma: float) -> float:
    if not gamma > 0:
        raise ValueError("step must be positive")
    x = np.asarray(x, dtype=float).reshape(-1)
    return float(np.linalg.norm(x - S.project(x - gamma * map_eval(M, x))))


@dataclass
class SolveResult:
    point: np.ndarray
    residual: float
    iterations: int
    method: str
    converged: bool
    trace: list = field(default_factory=list)
    halvings: list = field(default_factory=list)
    message: str = ""
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "point": [float(v) for v in self.point],
            "residual": float(self.residual),
            "iterations": int(self.iterations),
            "method": self.method,
            "converged": bool(self.converged),
            "status": "Converged" if self.converged else "NonConvergence",
            "message": self.message,
            "trace_tail": [float(v) for v in self.trace[-10:]],
            **self.extra,
        }


def lipschitz_estimate(M, S: ConvexSet, lo, hi, pairs: int = 20, seed: int = 0) -> float:
    """Largest finite-difference slope of the map over random pairs in the window."""
    rng = np.random.default_rng(seed)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    best = 0.0
    for _ in range(pairs):
        a = S.project(rng.uniform(lo, hi))
        b = S.project(rng.uniform(lo, hi))
        d = np.linalg.norm(a - b)
        if d > 0:
            try:
                best = max(best, float(np.linalg.norm(map_eval(M, a) - map_eval(M, b)) / d))
            except ArithmeticError:
                pass
    return best


def _window_of(M, S: ConvexSet, window):
    if window is not None:
        return np.asarray(window[0], dtype=float), np.asarray(window[1], dtype=float)
    if not isinstance(M, FunctionMap):
        try:
            return M.game.full_window()
        except ValueError:
            pass
    lo, hi = S.bounds()
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise ValueError("an unbounded set needs an explicit window")
    return lo, hi


def svi_solve(
    M,
    S: ConvexSet,
    x0=None,
    gamma0: float | None = None,
    max_iter: int = 20_000,
    tol: float = 1e-9,
    seed: int = 0,
    window=None,
) -> SolveResult:
    """Extragradient iteration with step halving whenever a step raises the residual."""
    lo, hi = _window_of(M, S, window)
    if gamma0 is None:
        L = lipschitz_estimate(M, S, lo, hi, seed=seed)
        gamma0 = 0.5 / L if L > 1e-12 else 1.0
    x = S.project(0.5 * (lo + hi) if x0 is None else np.asarray(x0, dtype=float))
    gamma = gamma0
    Fx = map_eval(M, x)
    y = S.project(x - gamma * Fx)
    r = float(np.linalg.norm(x - y))
    trace = [r]
    halvings = []
    best_x = x
    best_r0 = float(np.linalg.norm(x - S.project(x - gamma0 * Fx)))
    it = 0
    while it < max_iter:
        if r * gamma0 / gamma <= tol or best_r0 <= tol:
            break
        it += 1
        Fy = map_eval(M, y)
        x_new = S.project(x - gamma * Fy)
        F_new = map_eval(M, x_new)
        y_new = S.project(x_new - gamma * F_new)
        r_new = float(np.linalg.norm(x_new - y_new))
        # a rising residual or a step that does not move (the extrapolated
        # point can sit where a discontinuous selection vanishes) halves gamma
        stalled = np.linalg.norm(x_new - x) <= 1e-15 * (1.0 + np.linalg.norm(x))
        if (r_new > r or stalled) and gamma > GAMMA_FLOOR:
            gamma = max(0.5 * gamma, GAMMA_FLOOR)
            halvings.append(it)
            y = S.project(x - gamma * Fx)
            r = float(np.linalg.norm(x - y))
            trace.append(r)
            continue
        x, Fx, y, r = x_new, F_new, y_new, r_new
        trace.append(r)
        r0 = float(np.linalg.norm(x - S.project(x - gamma0 * Fx)))
        if r0 < best_r0:
            best_x, best_r0 = x, r0
    res0 = svi_residual(M, S, best_x, gamma0)
    converged = res0 <= tol or r * gamma0 / gamma <= tol
    return SolveResult(
        best_x,
        res0,
        it,
        "svi",
        converged,
        trace,
        halvings,
        "" if converged else "iteration cap reached",
        {"gamma0": float(gamma0), "gamma_final": float(gamma)},
    )


@dataclass
class MintyResult:
    verdict: str
    value: float
    witness: np.ndarray | None
    samples: int
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "min_value": float(self.value),
            "witness": None if self.witness is None else [float(v) for v in self.witness],
            "samples": int(self.samples),
            **self.detail,
        }


def minty_points(S: ConvexSet, lo, hi, budget: int, seed: int = 0, grid=None) -> np.ndarray:
    """Members of S from the window plus boundary points from projected outsiders."""
    P = halton(budget, lo, hi, seed)
    inside = P[S.contains_batch(P)]
    outside = P[~S.contains_batch(P)][: max(1, budget // 8)]
    boundary = np.array([S.project(p) for p in outside]) if len(outside) else np.zeros((0, P.shape[1]))
    parts = [inside, boundary]
    if grid is not None:
        G = np.atleast_2d(np.asarray(grid, dtype=float))
        parts.append(G[S.contains_batch(G)])
    return np.vstack(parts)


def minty_test(
    M,
    S: ConvexSet,
    xhat,
    budget: int = 20_000,
    tol: float = 1e-9,
    seed: int = 0,
    grid=None,
    window=None,
) -> MintyResult:
    """Search for y in S with ⟨F(y), y − x̂⟩ < −tol."""
    xhat = np.asarray(xhat, dtype=float).reshape(-1)
    lo, hi = _window_of(M, S, window)
    Y = np.vstack([xhat[None, :], minty_points(S, lo, hi, budget, seed, grid)])
    F = map_eval_batch(M, Y)
    v = np.einsum("ij,ij->i", F, Y - xhat)
    v = np.where(np.isnan(v), np.inf, v)
    i = int(np.argmin(v))
    vmin = float(v[i])
    if vmin < -tol:
        y = Y[i]
        again = float(map_eval(M, y) @ (y - xhat))
        if again < -tol:
            return MintyResult("Refuted", again, y.copy(), Y.shape[0])
    return MintyResult("Consistent", vmin, None, Y.shape[0])


def minty_qvi_test(
    game: RosenGame,
    xhat,
    cone_kind: ConeKind | str = ConeKind.PLAIN,
    budget: int = 2000,
    tol: float = 1e-6,
    seed: int = 0,
    points_per_player: int = 48,
    random_directions: int = 6,
) -> MintyResult:
    """Minty test over the cross set with sampled normal-cone representatives.

    For every player the deviations z are drawn from the slice at x̂ and
    ordered by objective value. The player's best response and points toward it are
    tried first. Each z gets the same candidate list whatever
    the cone kind (strict max-margin normal, the direction back to x̂, random
    directions), so a refutation under a smaller cone is also found under a
    larger one. A candidate counts only once certified by a cone test at
    twice the budget.
    """
    from .nash import best_response

    kind = ConeKind(cone_kind)
    xhat = np.asarray(xhat, dtype=float).reshape(-1)
    B = game.blocks
    rng = np.random.default_rng(seed)
    best_val = np.inf
    checked = 0
    for nu in range(B.players):
        lo, hi = game.window(nu)
        sl = game.slice_at(nu, xhat)
        xb = B.block(xhat, nu)
        Z = halton(max(8 * points_per_player, 256), lo, hi, seed + 7 * nu)
        Z = Z[sl.contains_batch(Z)]
        if Z.shape[0] == 0:
            continue
        vals = game.theta_batch(nu, B.assemble_batch(Z, B.rivals(xhat, nu), nu))
        order = np.argsort(np.where(np.isnan(vals), np.inf, vals), kind="stable")
        Z = Z[order[:points_per_player]]
        # points between x̂ and the best sampled deviation, where quasi-convex
        # separation arguments place their witnesses
        ts = np.array([0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0])
        seg = xb + ts[:, None] * (Z[0] - xb)
        # the best response is strictly better at any non-equilibrium
        zbr, _ = best_response(game, nu, B.rivals(xhat, nu), seed=seed)
        Z = np.vstack([zbr[None, :], xb + ts[:, None] * (zbr - xb), seg, Z])
        for z in Z:
            if np.linalg.norm(z - xb) <= tol:
                continue
            y = B.replace(xhat, z, nu)
            back = (xb - z) / np.linalg.norm(xb - z)
            cands = [back]
            d = cone_direction(game, nu, y, ConeKind.STRICT, (lo, hi), budget, seed)
            if d.u is not None:
                cands.append(d.u)
            cands += list(unit_directions(random_directions, B.dims[nu], rng))
            extra = np.vstack([xb[None, :], xb + np.linspace(0.0, 1.0, 11)[:, None] * (z - xb)])
            for u in cands:
                value = float(u @ (z - xb))
                if value >= best_val and value >= -tol:
                    continue
                cert = cone_test(game, nu, y, u, kind, (lo, hi), 2 * budget, CONE_TOL, seed, extra)
                checked += 1
                if cert.verdict != "Consistent":
                    continue
                best_val = min(best_val, value)
                if value < -tol:
                    return MintyResult(
                        "Refuted",
                        value,
                        y,
                        checked,
                        {"player": nu, "z": z.tolist(), "u": u.tolist(), "cone_kind": kind.value},
                    )
    return MintyResult("Consistent", best_val if np.isfinite(best_val) else 0.0, None, checked, {"cone_kind": kind.value})
