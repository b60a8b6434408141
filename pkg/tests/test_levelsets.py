import numpy as np
import pytest

from gnepkit.expr import parse_expression
from gnepkit.game import RosenGame
from gnepkit.gamefile import load_game
from gnepkit.geometry import Ball, BlockStructure, Box
from gnepkit.levelsets import (
    AtArgminError,
    ConeKind,
    LevelKind,
    adjustment_radius,
    cone_direction,
    cone_test,
    sample_level_set,
)


def one_player(text, lo, hi):
    lo, hi = np.atleast_1d(np.asarray(lo, float)), np.atleast_1d(np.asarray(hi, float))
    return RosenGame(BlockStructure((lo.size,)), Box(lo, hi), (parse_expression(text, lo.size),))


@pytest.fixture(scope="module")
def step():
    return load_game("step")


@pytest.fixture(scope="module")
def qcl1():
    return load_game("qc-l1")


def test_level_sets_nest(qcl1):
    x = np.array([0.5, 0.2, 0.0])
    weak = sample_level_set(qcl1, 0, x, LevelKind.WEAK, budget=4000)
    strict = sample_level_set(qcl1, 0, x, LevelKind.STRICT, budget=4000)
    adj = sample_level_set(qcl1, 0, x, LevelKind.ADJUSTED, budget=4000)
    as_set = lambda s: {tuple(p) for p in s.points}
    assert as_set(strict) <= as_set(adj) <= as_set(weak)
    assert not strict.empty


def test_step_plain_cone_is_zero(step):
    for x in np.linspace(-1.0, 1.0, 9):
        for u in (1.0, -1.0):
            assert cone_test(step, 0, [x], [u], ConeKind.PLAIN).verdict == "Refuted"


def test_step_strict_cone_for_nonpositive_x(step):
    # the strict level set at x <= 0 is the half line x > 0, so its normal cone is u <= 0
    for x in np.linspace(-1.0, 0.0, 5):
        assert cone_test(step, 0, [x], [-1.0], ConeKind.STRICT).verdict == "Consistent"
        assert cone_test(step, 0, [x], [1.0], ConeKind.STRICT).verdict == "Refuted"


def test_step_adjustment_radius(step):
    assert adjustment_radius(step, 0, [-1.0]) == pytest.approx(1.0, abs=1e-6)


def test_qcl1_cones_and_radius(qcl1):
    x = np.array([10.0, 0.0, 0.0])
    assert adjustment_radius(qcl1, 0, x) == pytest.approx(9.0, abs=1e-3)
    assert cone_test(qcl1, 0, x, [1.0, 2.0], ConeKind.STRICT).verdict == "Consistent"
    v = cone_test(qcl1, 0, x, [1.0, 2.0], ConeKind.ADJUSTED)
    assert v.verdict == "Refuted"
    w = v.witness
    assert min(abs(w[0]) + abs(w[1]), 1.0) <= 1.0 + 1e-12
    gap = np.linalg.norm(w - Ball([0.0, 0.0], 1.0, "l1").project(w))
    assert gap <= 9.0 + 1e-3


def test_cone_direction_qcl1(qcl1):
    d = cone_direction(qcl1, 0, [10.0, 0.0, 0.0])
    angle = np.arccos(np.clip(d.u @ np.array([1.0, 0.0]), -1, 1))
    assert angle <= 0.05
    assert d.certified


def test_cone_direction_smooth_and_argmin():
    g = one_player("(x1 - 2)^2", -2.0, 6.0)
    d = cone_direction(g, 0, [0.0])
    assert np.allclose(d.u, [-1.0])
    assert d.certified
    assert cone_direction(g, 0, [2.0]).at_argmin
    with pytest.raises(AtArgminError):
        adjustment_radius(g, 0, [2.0])


def test_cone_direction_aligns_with_gradient():
    # the strict level set lies on the descent side, so its normal follows the gradient
    rng = np.random.default_rng(8)
    for _ in range(100):
        L = rng.normal(size=(2, 2))
        Q = L @ L.T + 0.2 * np.eye(2)
        c = rng.uniform(-1, 1, 2)
        text = (f"{Q[0, 0]:.9g}*(x1 - {c[0]:.9g})^2 + {2 * Q[0, 1]:.9g}*(x1 - {c[0]:.9g})*(x2 - {c[1]:.9g})"
                f" + {Q[1, 1]:.9g}*(x2 - {c[1]:.9g})^2")
        g = one_player(text, [-3.0, -3.0], [3.0, 3.0])
        x = rng.uniform(-2, 2, 2)
        d = cone_direction(g, 0, x, budget=4000)
        grad = g.gradient(0, x)
        angle = np.arccos(np.clip(d.u @ grad / np.linalg.norm(grad), -1, 1))
        assert angle <= 0.1


def test_cone_scaling():
    rng = np.random.default_rng(9)
    g = one_player("min(abs(x1) + abs(x2), 1)", [-2.0, -2.0], [2.0, 2.0])
    for _ in range(20):
        x = rng.uniform(-1.5, 1.5, 2)
        u = rng.normal(size=2)
        lam = rng.uniform(0.1, 10)
        for kind in ConeKind:
            v = cone_test(g, 0, x, u, kind, budget=2000)
            w = cone_test(g, 0, x, lam * u, kind, budget=2000, tol=lam * 1e-7)
            assert v.verdict == w.verdict


_QC = [
    "min(abs(x1) + abs(x2), 1)",
    "(x1 - 0.3)^2 + (x2 + 0.2)^2",
    "max(x1, x2)",
    "sqrt(abs(x1 - 0.5) + abs(x2))",
    "log(1 + (x1 + 0.4)^2 + x2^2)",
    "0^max(x1 + x2, 0)",
]


def test_cone_nesting_200_triples():
    rng = np.random.default_rng(4242)
    games = [one_player(t, [-2.0, -2.0], [2.0, 2.0]) for t in _QC]
    bad = []
    for k in range(200):
        g = games[k % len(games)]
        x = rng.uniform(-1.5, 1.5, 2)
        u = rng.normal(size=2)
        u /= np.linalg.norm(u)
        v = {kind: cone_test(g, 0, x, u, kind, budget=2000, seed=k).verdict for kind in ConeKind}
        if v[ConeKind.STRICT] == "Refuted" and v[ConeKind.ADJUSTED] != "Refuted":
            bad.append((k, "strict without adjusted"))
        if v[ConeKind.ADJUSTED] == "Refuted" and v[ConeKind.PLAIN] != "Refuted":
            bad.append((k, "adjusted without plain"))
    assert bad == []
