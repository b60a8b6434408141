import numpy as np
import pytest

from gnepkit.gamefile import load_game
from gnepkit.levelsets import ConeKind
from gnepkit.nash import solve
from gnepkit.vi import (
    FunctionMap,
    GradientStack,
    QcAdjusted,
    QcStrict,
    map_eval,
    minty_qvi_test,
    minty_test,
    svi_residual,
    svi_solve,
)


@pytest.fixture(scope="module")
def aad():
    return load_game("aad2014")


@pytest.fixture(scope="module")
def cav():
    return load_game("cavazzuti")


def test_gradient_stack(aad, cav):
    assert np.allclose(map_eval(GradientStack(aad), [0.25, 0.5]), [-3.5, -3.0])
    assert np.allclose(map_eval(GradientStack(cav), [0.0, 0.5]), [0.0, 0.75])


def test_svi_residual(aad):
    M = GradientStack(aad)
    assert svi_residual(M, aad.X, [0.0, 1.0], 0.1) <= 1e-8
    # x - 0.1 T(x) = (0.6, 0.8) projects to (0.2, 0.6) on the line 2 x1 + x2 = 1
    assert svi_residual(M, aad.X, [0.25, 0.5], 0.1) == pytest.approx(np.hypot(0.05, 0.1), abs=1e-9)


def test_svi_solve_aad(aad):
    res = svi_solve(GradientStack(aad), aad.X, None, None, 20000, 1e-9, 0, aad.full_window())
    assert res.converged
    assert np.allclose(res.point, [0.0, 1.0], atol=1e-6)
    assert res.residual <= 1e-6


def test_svi_affine_monotone_map():
    from gnepkit.geometry import Box

    A = np.array([[2.0, 1.0], [-1.0, 2.0]])
    b = np.array([-1.0, 0.5])
    M = FunctionMap(lambda x: A @ x + b)
    S = Box([-1.0, -1.0], [1.0, 1.0])
    res = svi_solve(M, S, None, None, 20000, 1e-10, 0, (S.lo, S.hi))
    assert np.allclose(res.point, np.linalg.solve(A, -b), atol=1e-6)


def test_qc_maps_are_unit_normals(aad):
    x = np.array([0.25, 0.5])
    F = map_eval(QcStrict(aad), x)
    assert np.allclose(np.abs(F), [1.0, 1.0])
    assert np.all(F < 0)
    G = map_eval(QcAdjusted(aad), x)
    assert np.allclose(G, F, atol=1e-6)


def test_minty_vi(aad):
    M = GradientStack(aad)
    assert minty_test(M, aad.X, [0.4, 0.2], budget=4000).verdict == "Refuted"
    assert minty_test(M, aad.X, [0.0, 1.0], budget=4000).verdict == "Consistent"


def test_minty_vi_cavazzuti_grid(cav):
    g = np.linspace(-1.0, 1.0, 201)
    G = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
    r = minty_test(GradientStack(cav), cav.X, [0.0, -1.0], budget=4000, grid=G)
    assert r.verdict == "Consistent"
    assert r.value >= -1e-9


def test_minty_qvi_equilibrium_and_not(aad):
    assert minty_qvi_test(aad, [0.25, 0.5], ConeKind.PLAIN).verdict == "Consistent"
    for kind in ConeKind:
        assert minty_qvi_test(aad, [0.1, 0.1], kind).verdict == "Refuted"


def test_svi_certified_runs_pass_minty_plain(rng):
    from conftest import random_convex_game

    for _ in range(4):
        g = random_convex_game(rng)
        res, cert = solve(g, "svi")
        assert cert.verdict == "Certified"
        assert minty_qvi_test(g, res.point, ConeKind.PLAIN, budget=1000).verdict == "Consistent"


def test_extragradient_trace_monotone_after_last_halving(rng):
    from conftest import random_convex_game

    for _ in range(10):
        g = random_convex_game(rng)
        res = svi_solve(GradientStack(g), g.X, None, None, 20000, 1e-9, 0, g.full_window())
        start = res.halvings[-1] if res.halvings else 0
        tail = np.array(res.trace[start:])
        assert np.all(np.diff(tail) <= 1e-15)


def test_minty_refutation_persists_with_budget(aad):
    M = GradientStack(aad)
    for budget in (500, 2000, 8000):
        assert minty_test(M, aad.X, [0.4, 0.2], budget=budget).verdict == "Refuted"


def test_minty_qvi_cone_kind_implication(aad, cav):
    cases = [(aad, [0.3, 0.2]), (aad, [0.0, 0.5]), (cav, [0.5, 0.5]), (cav, [0.0, -1.0]), (aad, [0.25, 0.5])]
    for g, x in cases:
        v = {k: minty_qvi_test(g, x, k, budget=1000).verdict for k in ConeKind}
        if v[ConeKind.PLAIN] == "Refuted":
            assert v[ConeKind.ADJUSTED] == "Refuted"
        if v[ConeKind.ADJUSTED] == "Refuted":
            assert v[ConeKind.STRICT] == "Refuted"
