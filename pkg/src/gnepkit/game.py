"""Rosen games: a shared convex set, one objective per player, search windows."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .expr import ExprDomainError, ObjectiveExpr
from .geometry import BlockStructure, ConvexSet, EmptySetError, SliceSet


@dataclass(frozen=True, eq=False)
class RosenGame:
    blocks: BlockStructure
    X: ConvexSet
    objectives: tuple
    windows: tuple = ()
    labels: tuple = ()
    name: str = "game"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        objs = tuple(self.objectives)
        B = self.blocks
        if len(objs) != B.players:
            raise ValueError(f"expected {B.players} objectives, got {len(objs)}")
        for k, e in enumerate(objs):
            if e.arity > B.n:
                raise ValueError(f"objective {k + 1} references x{e.arity} beyond dimension {B.n}")
        if self.X.dim != B.n:
            raise ValueError(f"set dimension {self.X.dim} differs from profile dimension {B.n}")
        object.__setattr__(self, "objectives", objs)
        wins = []
        for nu in range(B.players):
            if nu < len(self.windows) and self.windows[nu] is not None:
                lo, hi = self.windows[nu]
            else:
                lo, hi = self.X.bounds()
                lo, hi = lo[B.index(nu)], hi[B.index(nu)]
            lo = np.asarray(lo, dtype=float).reshape(-1)
            hi = np.asarray(hi, dtype=float).reshape(-1)
            if lo.size != B.dims[nu] or hi.size != B.dims[nu] or np.any(lo > hi):
                raise ValueError(f"window of player {nu + 1} is malformed")
            wins.append((lo, hi))
        object.__setattr__(self, "windows", tuple(wins))
        labels = tuple(self.labels) or tuple(f"player{k + 1}" for k in range(B.players))
        object.__setattr__(self, "labels", labels)
        try:
            self.X.project(self.window_center())
        except EmptySetError as exc:
            raise ValueError("shared set is empty") from exc

    @property
    def n(self) -> int:
        return self.blocks.n

    @property
    def players(self) -> int:
        return self.blocks.players

    def window(self, nu: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.windows[nu]
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError(f"player {nu + 1} has no bounded search window")
        return lo, hi

    def full_window(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.concatenate([self.window(nu)[0] for nu in range(self.players)])
        hi = np.concatenate([self.window(nu)[1] for nu in range(self.players)])
        return lo, hi

    def window_center(self) -> np.ndarray:
        c = []
        for lo, hi in self.windows:
            lo_f = np.where(np.isfinite(lo), lo, np.where(np.isfinite(hi), hi, 0.0))
            hi_f = np.where(np.isfinite(hi), hi, lo_f)
            c.append(0.5 * (lo_f + hi_f))
        return np.concatenate(c)

    def theta(self, nu: int, x) -> float:
        return self.objectives[nu].evaluate(x)

    def theta_safe(self, nu: int, x) -> float:
        try:
            return self.objectives[nu].evaluate(x)
        except (ExprDomainError, ZeroDivisionError, OverflowError):
            return np.inf

    def theta_batch(self, nu: int, X) -> np.ndarray:
        """Values on many profiles; points outside the domain give nan."""
        return self.objectives[nu].evaluate_batch(X, errors="nan")

    def gradient(self, nu: int, x, warn: bool = True) -> np.ndarray:
        return self.objectives[nu].gradient(x, block=self.blocks.index(nu), warn=warn)

    def slice(self, nu: int, x_minus) -> SliceSet:
        return SliceSet(self.X, self.blocks, nu, x_minus)

    def slice_at(self, nu: int, x) -> SliceSet:
        return SliceSet(self.X, self.blocks, nu, self.blocks.rivals(x, nu))

    def with_set(self, X: ConvexSet, name: str | None = None) -> "RosenGame":
        return replace(self, X=X, name=name or self.name)

    def with_windows(self, windows) -> "RosenGame":
        return replace(self, windows=tuple(windows))
