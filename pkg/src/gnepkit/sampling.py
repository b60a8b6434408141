"""Low-discrepancy and random sampling helpers shared by the samplers."""

from __future__ import annotations

import warnings

import numpy as np
from scipy.stats import qmc


def halton(n: int, lo, hi, seed: int = 0) -> np.ndarray:
    """First ``n`` points of a scrambled Halton sequence scaled into ``[lo, hi]``.

    Prefixes are stable: the first ``n`` points of a larger draw equal a
    draw of ``n`` with the same seed, so budgets nest.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    d = lo.size
    if n <= 0:
        return np.zeros((0, d))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        u = qmc.Halton(d=d, scramble=True, seed=seed).random(n)
    return lo + u * (hi - lo)


def unit_directions(n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.standard_normal((n, d))
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return g / norms


def grid(lo, hi, per_axis: int) -> np.ndarray:
    """Full tensor grid with ``per_axis`` points on every axis."""
    axes = [np.linspace(a, b, per_axis) for a, b in zip(np.ravel(lo), np.ravel(hi))]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)
