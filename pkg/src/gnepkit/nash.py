"""Best responses, equilibrium certificates, Nikaido-Isoda, reduction solver."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .expr import ExprDomainError
from .game import RosenGame
from .geometry import ConvexSet, EmptySetError, _vec
from .sampling import halton, unit_directions
from .vi import GradientStack, QcAdjusted, QcStrict, SolveResult, svi_solve

VERIFY_TOL = 1e-6
TIE_TOL = 1e-9
METHODS = ("svi", "qc-svi", "qc-svi-adjusted", "best-response", "reduction")


class EmptySliceError(ValueError):
    pass


# ---------------------------------------------------------------------------
# local minimization over a convex set


def _golden(phi, a: float, b: float, iters: int = 80) -> tuple[float, float]:
    """Golden-section search on [a, b]; endpoints are always candidates."""
    r = (np.sqrt(5.0) - 1.0) / 2.0
    c, d = b - r * (b - a), a + r * (b - a)
    fc, fd = phi(c), phi(d)
    for _ in range(iters):
        if b - a <= 1e-13 * (1.0 + abs(a) + abs(b)):
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - r * (b - a)
            fc = phi(c)
        else:
            a, c, fc = c, d, fd
            d = a + r * (b - a)
            fd = phi(d)
    best = min(((fc, c), (fd, d), (phi(a), a), (phi(b), b)), key=lambda p: p[0])
    return best[1], best[0]


class _Problem:
    """Minimize a scalar function over a convex set inside a bounding window."""

    def __init__(self, f, grad, S: ConvexSet, lo, hi, smooth: bool):
        self.f = f
        self.grad = grad
        self.S = S
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)
        self.smooth = smooth
        self.reach = float(np.linalg.norm(self.hi - self.lo)) or 1.0

    def value(self, y) -> float:
        try:
            v = self.f(y)
        except (ExprDomainError, ZeroDivisionError, OverflowError):
            return np.inf
        return v if np.isfinite(v) else np.inf

    def gradient(self, y):
        try:
            g = self.grad(y)
        except (ExprDomainError, ZeroDivisionError, OverflowError):
            return None
        return g if np.all(np.isfinite(g)) else None

    def stationarity(self, y) -> float:
        g = self.gradient(y)
        if g is None:
            return np.inf
        return float(np.linalg.norm(y - self.S.project(y - g)))

    def projected_gradient(self, y, max_iter: int = 2000, tol: float = 1e-13):
        y = self.S.project(y)
        fy = self.value(y)
        g = self.gradient(y)
        if g is None or not np.isfinite(fy):
            return y, fy
        alpha = 1.0
        for _ in range(max_iter):
            a = alpha
            while True:
                z = self.S.project(y - a * g)
                fz = self.value(z)
                if fz <= fy + 1e-4 * float(g @ (z - y)):
                    break
                a *= 0.5
                if a < 1e-18:
                    return y, fy
            s = z - y
            if np.linalg.norm(s) <= tol * (1.0 + np.linalg.norm(y)):
                return z, fz
            gz = self.gradient(z)
            if gz is None:
                return z, fz
            yk = gz - g
            sy = float(s @ yk)
            alpha = float(s @ s) / sy if sy > 1e-300 else 2.0 * a
            alpha = min(max(alpha, 1e-10), 1e10)
            y, fy, g = z, fz, gz
        return y, fy

    def _extent(self, y, d) -> float:
        """Largest t in [0, reach] with y + t d in the set (bisection)."""
        if self.S.contains(y + self.reach * d):
            return self.reach
        lo, hi = 0.0, self.reach
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if self.S.contains(y + mid * d):
                lo = mid
            else:
                hi = mid
        return lo

    def line_rounds(self, y, fy, rng, rounds: int = 30):
        n = y.size
        for _ in range(rounds):
            improved = False
            dirs = np.vstack([np.eye(n), unit_directions(n, n, rng)]) if n > 1 else np.eye(1)
            for d in dirs:
                t_hi = self._extent(y, d)
                t_lo = -self._extent(y, -d)
                if t_hi - t_lo <= 1e-15:
                    continue
                t, ft = _golden(lambda t: self.value(y + t * d), t_lo, t_hi)
                if ft < fy - 1e-15:
                    cand = y + t * d
                    if self.S.contains(cand):
                        y, fy, improved = cand, ft, True
            if not improved:
                break
        return y, fy

    def solve(self, starts, rng) -> list:
        out = []
        for y0 in starts:
            y, fy = self.projected_gradient(y0) if self.smooth else (self.S.project(y0), self.value(self.S.project(y0)))
            if not self.smooth or not np.isfinite(fy):
                y, fy = self.line_rounds(y, fy, rng)
                y2, f2 = self.projected_gradient(y, max_iter=200)
                if f2 < fy:
                    y, fy = y2, f2
            out.append((fy, y))
        return out


def _pick(cands: list) -> tuple[np.ndarray, float]:
    """Best value; ties within TIE_TOL go to the lexicographically smallest point."""
    cands = [(v, y) for v, y in cands if np.isfinite(v)]
    if not cands:
        raise EmptySliceError("no start produced a finite objective value")
    fbest = min(v for v, _ in cands)
    near = [y for v, y in cands if v <= fbest + TIE_TOL]
    near.sort(key=lambda y: tuple(np.round(y, 12)))
    y = near[0]
    return y, min(v for v, yy in cands if yy is y)


def _starts(S: ConvexSet, lo, hi, f_batch, count: int, seed: int, extra=()) -> list:
    pool = halton(max(64, 16 * count), lo, hi, seed)
    inside = pool[S.contains_batch(pool)]
    if inside.shape[0] >= count:
        vals = f_batch(inside)
        vals = np.where(np.isnan(vals), np.inf, vals)
        chosen = inside[np.argsort(vals, kind="stable")[:count]]
    else:
        chosen = np.vstack([inside] + [S.project(p)[None, :] for p in pool[: count - inside.shape[0]]])
    starts = [S.project(0.5 * (lo + hi))] + [np.asarray(e, dtype=float) for e in extra] + list(chosen)
    return starts


# ---------------------------------------------------------------------------
# best responses and certificates


def best_response(
    game: RosenGame,
    nu: int,
    x_minus,
    multistarts: int = 16,
    seed: int = 0,
    start=None,
) -> tuple[np.ndarray, float]:
    """Minimize player nu's objective over its slice at the rivals' strategies."""
    B = game.blocks
    x_minus = _vec(x_minus, B.n - B.dims[nu])
    sl = game.slice(nu, x_minus)
    if sl.is_empty():
        raise EmptySliceError(f"slice of player {nu + 1} is empty")
    e = game.objectives[nu]
    idx = B.index(nu)
    lo, hi = game.window(nu)

    def f(y):
        return e.evaluate(B.assemble(y, x_minus, nu))

    def g(y):
        return e.gradient(B.assemble(y, x_minus, nu), block=idx, warn=False)

    def fb(Y):
        return game.theta_batch(nu, B.assemble_batch(Y, x_minus, nu))

    extra = []
    if start is not None:
        extra.append(sl.project(_vec(start, B.dims[nu])))
    prob = _Problem(f, g, sl, lo, hi, e.is_smooth)
    starts = _starts(sl, lo, hi, fb, multistarts, seed + nu, extra)
    rng = np.random.default_rng(seed + nu)
    y, v = _pick(prob.solve(starts, rng))
    return y, v


@dataclass
class EquilibriumCertificate:
    point: np.ndarray
    regrets: list
    feasible: bool
    verdict: str
    best_deviations: list
    tol: float
    values: list = field(default_factory=list)

    @property
    def max_regret(self) -> float:
        r = [v for v in self.regrets if v is not None]
        return max(r) if r else float("inf")

    def to_dict(self) -> dict:
        return {
            "point": [float(v) for v in self.point],
            "verdict": self.verdict,
            "feasible": bool(self.feasible),
            "regrets": [None if r is None else float(r) for r in self.regrets],
            "max_regret": float(self.max_regret),
            "best_deviations": [None if d is None else [float(v) for v in d] for d in self.best_deviations],
            "values": [None if v is None else float(v) for v in self.values],
            "tol": float(self.tol),
        }


def verify_equilibrium(game: RosenGame, xhat, tol: float = VERIFY_TOL, multistarts: int = 16, seed: int = 0) -> EquilibriumCertificate:
    """Per-player regrets at xhat; Certified iff feasible and every regret ≤ tol."""
    B = game.blocks
    xhat = _vec(xhat, B.n)
    feasible = game.X.contains(xhat)
    regrets, devs, values = [], [], []
    for nu in range(B.players):
        here = game.theta_safe(nu, xhat)
        values.append(here if np.isfinite(here) else None)
        try:
            y, v = best_response(game, nu, B.rivals(xhat, nu), multistarts, seed,
                                 start=B.block(xhat, nu) if feasible else None)
        except EmptySliceError:
            regrets.append(None)
            devs.append(None)
            continue
        if feasible and v > here:
            # numerical search stayed above the current value; the current
            # block is itself a feasible deviation
            y, v = B.block(xhat, nu), here
        regrets.append(float(here - v))
        devs.append(y)
    ok = feasible and all(r is not None and r <= tol for r in regrets)
    return EquilibriumCertificate(xhat, regrets, bool(feasible), "Certified" if ok else "Refuted", devs, tol, values)


def nikaido_isoda(game: RosenGame, x, y) -> float:
    B = game.blocks
    x = _vec(x, B.n)
    y = _vec(y, B.n)
    return float(sum(game.theta(nu, B.replace(x, B.block(y, nu), nu)) - game.theta(nu, x) for nu in range(B.players)))


def reduction_maps(game: RosenGame, norm: str = "l2"):
    """The two objectives of the auxiliary two-player game."""
    B = game.blocks
    ords = {"l2": 2, "l1": 1, "linf": np.inf}
    if norm not in ords:
        raise ValueError(f"unknown norm {norm!r}")

    def f1(x, y):
        return float(np.linalg.norm(_vec(x, B.n) - _vec(y, B.n), ord=ords[norm]))

    def f2(x, y):
        x = _vec(x, B.n)
        y = _vec(y, B.n)
        return float(sum(game.theta(nu, B.replace(x, B.block(y, nu), nu)) for nu in range(B.players)))

    return f1, f2


def reduction_y_step(game: RosenGame, x, multistarts: int = 16, seed: int = 0, warm=None):
    """Joint minimization over X of the summed objectives against x.

    Returns the minimizer, its value and the projected-gradient residual.
    """
    B = game.blocks
    x = _vec(x, B.n)
    lo, hi = game.full_window()
    objs = game.objectives

    def f(y):
        return sum(objs[nu].evaluate(B.replace(x, y[B.index(nu)], nu)) for nu in range(B.players))

    def g(y):
        out = np.empty(B.n)
        for nu in range(B.players):
            idx = B.index(nu)
            out[idx] = objs[nu].gradient(B.replace(x, y[idx], nu), block=idx, warn=False)
        return out

    def fb(Y):
        tot = np.zeros(Y.shape[0])
        for nu in range(B.players):
            Z = np.tile(x, (Y.shape[0], 1))
            Z[:, B.index(nu)] = Y[:, B.index(nu)]
            tot += game.theta_batch(nu, Z)
        return tot

    smooth = all(e.is_smooth for e in objs)
    prob = _Problem(f, g, game.X, lo, hi, smooth)
    extra = [x] + ([] if warm is None else [warm])
    starts = _starts(game.X, lo, hi, fb, multistarts, seed, extra)
    y, v = _pick(prob.solve(starts, np.random.default_rng(seed)))
    res = prob.stationarity(y) if smooth else 0.0
    return y, v, res


def solve_reduction(
    game: RosenGame,
    max_rounds: int = 200,
    tol: float = 1e-9,
    multistarts: int = 16,
    seed: int = 0,
    y0=None,
    verify_tol: float = VERIFY_TOL,
) -> tuple[SolveResult, EquilibriumCertificate]:
    """Alternate x ← P_X(y) and y ← argmin_X f2(x, ·) until the pair is fixed."""
    lo, hi = game.full_window()
    y = game.X.project(0.5 * (lo + hi) if y0 is None else _vec(y0, game.n))
    _, f2 = reduction_maps(game)
    trace = []
    converged = False
    y_res = np.inf
    rounds = 0
    for rounds in range(1, max_rounds + 1):
        x = game.X.project(y)
        # full multistart on the first round, warm starts afterwards
        k = multistarts if rounds == 1 else 2
        y_new, v_new, y_res = reduction_y_step(game, x, k, seed, warm=y)
        improve = f2(x, y) - v_new if game.X.contains(y) else np.inf
        gap = float(np.linalg.norm(x - y_new))
        trace.append(gap)
        y = y_new
        if gap <= tol and improve <= tol:
            converged = True
            break
    x = game.X.project(y)
    cert = verify_equilibrium(game, x, verify_tol, multistarts, seed)
    res = SolveResult(
        x, cert.max_regret, rounds, "reduction", converged, trace, [],
        "" if converged else "alternating best responses did not settle",
        {"pair_gap": trace[-1] if trace else None, "y_residual": float(y_res)},
    )
    return res, cert


def best_response_dynamics(
    game: RosenGame,
    x0=None,
    max_sweeps: int = 500,
    tol: float = 1e-10,
    multistarts: int = 16,
    seed: int = 0,
) -> SolveResult:
    """Gauss-Seidel sweeps of best responses in player order."""
    B = game.blocks
    lo, hi = game.full_window()
    x = game.X.project(0.5 * (lo + hi) if x0 is None else _vec(x0, B.n))
    trace = []
    converged = False
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        prev = x.copy()
        for nu in range(B.players):
            y, _ = best_response(game, nu, B.rivals(x, nu), multistarts, seed, start=B.block(x, nu))
            x = B.replace(x, y, nu)
        change = float(np.linalg.norm(x - prev))
        trace.append(change)
        if change <= tol:
            converged = True
            break
    return SolveResult(x, trace[-1], sweeps, "best-response", converged, trace, [],
                       "" if converged else "sweep cap reached")


def solve(
    game: RosenGame,
    method: str = "svi",
    x0=None,
    tol: float = 1e-9,
    max_iter: int | None = None,
    seed: int = 0,
    verify_tol: float = VERIFY_TOL,
    multistarts: int = 16,
    budget: int = 2000,
) -> tuple[SolveResult, EquilibriumCertificate]:
    """Run one solution method and certify its output against the game."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    if method == "reduction":
        return solve_reduction(game, max_iter or 200, tol, multistarts, seed, x0, verify_tol)
    if method == "best-response":
        res = best_response_dynamics(game, x0, max_iter or 500, tol, multistarts, seed)
    else:
        if method == "svi":
            M = GradientStack(game)
            cap = max_iter or 20_000
        else:
            cls = QcStrict if method == "qc-svi" else QcAdjusted
            M = cls(game, None, budget, seed)
            cap = max_iter or 200
        res = svi_solve(M, game.X, x0, None, cap, tol, seed, game.full_window())
        res.method = method
    cert = verify_equilibrium(game, res.point, verify_tol, multistarts, seed)
    return res, cert
