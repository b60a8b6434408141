"""One test per acceptance criterion; each prints a PASS/FAIL line in the summary."""

import io
import json
from contextlib import contextmanager

import numpy as np
import pytest

import test_expr
import test_geometry
from conftest import random_convex_game
from gnepkit.cli import run_cli
from gnepkit.coercive import implication_audit, solve_unbounded
from gnepkit.expr import parse_expression
from gnepkit.game import RosenGame
from gnepkit.gamefile import load_game
from gnepkit.geometry import Ball, BlockStructure, Box
from gnepkit.levelsets import ConeKind, adjustment_radius, cone_test
from gnepkit.nash import reduction_y_step, solve, solve_reduction, verify_equilibrium
from gnepkit.vi import minty_qvi_test


@pytest.fixture
def criterion(request):
    @contextmanager
    def run(number: int, title: str):
        checks = []
        try:
            yield checks
        except Exception as exc:  # recorded, then re-raised
            checks.append((f"raised {type(exc).__name__}: {exc}", False))
            raise
        finally:
            failed = [name for name, ok in checks if not ok]
            status = "PASS" if checks and not failed else "FAIL"
            detail = "; ".join(failed) if failed else f"{len(checks)} checks"
            request.config.acceptance_lines.append(f"criterion {number}: {status} - {title} ({detail})")
        bad = [name for name, ok in checks if not ok]
        assert not bad, bad

    return run


def cli(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = run_cli([*argv, "--no-timestamp"], out, err)
    return code, json.loads(out.getvalue()), out.getvalue()


def test_criterion_1_aad_solutions(criterion):
    with criterion(1, "AAD2014 reduction, SVI, segment certificates, origin refuted") as checks:
        code, rep, _ = cli("solve", "aad2014", "--method", "reduction")
        x = np.array(rep["result"]["solve"]["point"])
        checks.append((f"reduction point {x.tolist()}", code == 0 and np.max(np.abs(x - [0, 1])) <= 1e-5))
        code, rep, _ = cli("solve", "aad2014", "--method", "svi")
        x = np.array(rep["result"]["solve"]["point"])
        r = rep["result"]["solve"]["residual"]
        checks.append((f"svi point {x.tolist()} residual {r}", np.max(np.abs(x - [0, 1])) <= 1e-5 and r <= 1e-6))
        for t in np.linspace(0.05, 0.45, 5):
            code, rep, _ = cli("verify", "aad2014", "--point", f"{float(t)!r},{float(1 - 2 * t)!r}")
            mr = rep["result"]["max_regret"]
            checks.append((f"segment point t={t:.2f} regret {mr}", code == 0 and mr <= 1e-6))
        code, rep, _ = cli("verify", "aad2014", "--point", "0,0")
        r1 = rep["result"]["regrets"][0]
        checks.append((f"origin regret1 {r1}", code == 1 and abs(r1 - 1.75) <= 1e-6))


def test_criterion_2_non_converse(criterion):
    with criterion(2, "certified (0.25,0.5) is not a reduction fixed pair") as checks:
        g = load_game("aad2014")
        checks.append(("(0.25,0.5) certified", verify_equilibrium(g, [0.25, 0.5]).verdict == "Certified"))
        y, _, _ = reduction_y_step(g, [0.25, 0.5])
        checks.append((f"y-step lands at {y.tolist()}", np.max(np.abs(y - [0.0, 1.0])) <= 1e-6))


def test_criterion_3_cone_fixtures(criterion):
    with criterion(3, "step and qc-l1 cone fixtures") as checks:
        step = load_game("step")
        xs = np.linspace(-1.0, 1.0, 11)
        plain = [cone_test(step, 0, [x], [1.0], ConeKind.PLAIN).verdict for x in xs]
        checks.append(("step plain u=1 refuted everywhere", all(v == "Refuted" for v in plain)))
        strict = [cone_test(step, 0, [x], [1.0], ConeKind.STRICT).verdict for x in xs[xs <= 0]]
        checks.append((f"step strict u=1 consistent for x<=0 (got {sorted(set(strict))})",
                       all(v == "Consistent" for v in strict)))
        g = load_game("qc-l1")
        x = np.array([10.0, 0.0, 0.0])
        checks.append(("qc-l1 strict (1,2) consistent",
                       cone_test(g, 0, x, [1.0, 2.0], ConeKind.STRICT).verdict == "Consistent"))
        v = cone_test(g, 0, x, [1.0, 2.0], ConeKind.ADJUSTED)
        rho = adjustment_radius(g, 0, x)
        ok = v.verdict == "Refuted"
        if ok:
            w = v.witness
            in_level = min(abs(w[0]) + abs(w[1]), 1.0) <= 1.0
            near = np.linalg.norm(w - Ball([0.0, 0.0], 1.0, "l1").project(w)) <= rho + 1e-9
            ok = in_level and near
        checks.append(("qc-l1 adjusted (1,2) refuted with a valid witness", ok))
        checks.append((f"adjustment radius {rho}", abs(rho - 9.0) <= 1e-3))


EQUILIBRIA = (
    [("aad2014", (t, 1 - 2 * t)) for t in np.linspace(0.0, 0.5, 6)]
    + [("diamond", (t, 1 - t)) for t in np.linspace(0.0, 1.0, 5)]
    + [("cavazzuti", (0.0, -1.0)), ("hull3d", (0.0, 1.0, 0.5)), ("wedge", (0.0, 0.0)),
       ("hyperbola", (1.0, 1.0)), ("hyperbola", (2.0, 0.5)), ("hyperbola", (0.5, 2.0)),
       ("qc-l1", (0.0, 0.0, 0.0)), ("step", (0.5,)), ("step", (1.0,))]
)
NON_EQUILIBRIA = [
    ("aad2014", (0.1, 0.1)), ("aad2014", (0.2, 0.3)), ("aad2014", (0.0, 0.0)), ("aad2014", (0.3, 0.1)),
    ("aad2014", (0.05, 0.5)), ("diamond", (0.0, 0.0)), ("diamond", (0.2, 0.3)), ("diamond", (-0.5, 0.0)),
    ("diamond", (0.1, -0.5)), ("cavazzuti", (0.5, 0.5)), ("cavazzuti", (0.0, 0.0)), ("cavazzuti", (-0.5, 0.2)),
    ("qc-l1", (0.5, 0.2, 0.0)), ("qc-l1", (0.3, 0.3, 0.5)), ("qc-l1", (10.0, 0.0, 0.0)), ("wedge", (0.5, 1.0)),
    ("wedge", (0.0, 2.0)), ("hyperbola", (2.0, 2.0)), ("hyperbola", (1.0, 3.0)), ("hull3d", (0.5, 0.5, 0.0)),
]


def test_criterion_4_cone_nesting(criterion):
    with criterion(4, "cone nesting on 200 random triples") as checks:
        texts = [
            "min(abs(x1) + abs(x2), 1)", "(x1 - 0.3)^2 + (x2 + 0.2)^2", "max(x1, x2)",
            "sqrt(abs(x1 - 0.5) + abs(x2))", "log(1 + (x1 + 0.4)^2 + x2^2)", "0^max(x1 + x2, 0)",
        ]
        games = [RosenGame(BlockStructure((2,)), Box([-2.0, -2.0], [2.0, 2.0]), (parse_expression(t, 2),))
                 for t in texts]
        rng = np.random.default_rng(777)
        bad = 0
        for k in range(200):
            g = games[k % len(games)]
            x = rng.uniform(-1.5, 1.5, 2)
            u = rng.normal(size=2)
            v = {kind: cone_test(g, 0, x, u, kind, budget=2000, seed=k).verdict for kind in ConeKind}
            bad += v[ConeKind.STRICT] == "Refuted" and v[ConeKind.ADJUSTED] != "Refuted"
            bad += v[ConeKind.ADJUSTED] == "Refuted" and v[ConeKind.PLAIN] != "Refuted"
        checks.append((f"{bad} nesting violations", bad == 0))


def test_criterion_5_minty_qvi(criterion):
    with criterion(5, "Minty quasi-VI: necessary on equilibria, refuting on non-equilibria") as checks:
        games = {}
        necessary = sufficient = 0
        for name, x in EQUILIBRIA:
            g = games.setdefault(name, load_game(name))
            assert verify_equilibrium(g, x).verdict == "Certified", (name, x)
            necessary += minty_qvi_test(g, x, ConeKind.PLAIN).verdict != "Consistent"
        for name, x in NON_EQUILIBRIA:
            g = games.setdefault(name, load_game(name))
            assert verify_equilibrium(g, x).verdict == "Refuted", (name, x)
            sufficient += minty_qvi_test(g, x, ConeKind.STRICT).verdict != "Refuted"
        checks.append((f"{len(EQUILIBRIA)} equilibria, {necessary} plain violations", necessary == 0 and len(EQUILIBRIA) == 20))
        checks.append((f"{len(NON_EQUILIBRIA)} non-equilibria, {sufficient} strict misses",
                       sufficient == 0 and len(NON_EQUILIBRIA) == 20))


def test_criterion_6_cavazzuti(criterion):
    with criterion(6, "Cavazzuti certificate, Minty grid oracle, discrepancy flag") as checks:
        code, rep, _ = cli("verify", "cavazzuti", "--point", "0,-1")
        checks.append(("(0,-1) certified", code == 0 and rep["result"]["verdict"] == "Certified"))
        code, rep, _ = cli("minty", "cavazzuti", "--point", "0,-1", "--grid-step", "1e-3")
        vmin = rep["result"]["min_value"]
        checks.append((f"grid min value {vmin}", vmin >= -1e-9))
        checks.append(("paper_discrepancy warning", any(w.startswith("paper_discrepancy") for w in rep["warnings"])))


def test_criterion_7_coercive(criterion):
    with criterion(7, "hyperbola C3 and C0 refuted, wedge probe") as checks:
        code, rep, _ = cli("coercive", "hyperbola", "--condition", "c3")
        w = np.array(rep["result"]["check"]["witness_x"])
        checks.append((f"C3 witness {w.tolist()}", rep["result"]["verdict"] == "Refuted"
                       and np.max(np.abs(w - [2 * np.sqrt(2), np.sqrt(2) / 4])) <= 1e-6))
        code, rep, _ = cli("coercive", "hyperbola", "--condition", "c0")
        w = np.array(rep["result"]["check"]["witness_x"])
        a = np.sqrt(4 + np.sqrt(15))
        corner = min(np.linalg.norm(w - [a, 1 / a]), np.linalg.norm(w - [1 / a, a]))
        checks.append((f"C0 corner witness {w.tolist()}", rep["result"]["verdict"] == "Refuted" and corner <= 1e-4))
        checks.append(("hyperbola discrepancy warning", any(s.startswith("paper_discrepancy") for s in rep["warnings"])))
        wedge = load_game("wedge")
        audit = implication_audit(wedge, 1.0, budget=50, probes=[[2.0, 2.0]])
        checks.append(("wedge min-norm element norm 2",
                       audit["item1"]["passes"] and abs(audit["probes"][0]["norm"] - 2.0) <= 1e-9))


def test_criterion_8_unbounded(criterion):
    with criterion(8, "unbounded orthant certified at (2,2) by rho=4") as checks:
        g = RosenGame(
            BlockStructure((1, 1)),
            Box([0.0, 0.0], [np.inf, np.inf]),
            (parse_expression("(x1 - 2)^2", 2), parse_expression("(x2 - 2)^2", 2)),
            windows=(([0.0], [10.0]), ([0.0], [10.0])),
        )
        res, cert, log = solve_unbounded(g, 1.0, 2.0)
        checks.append((f"point {res.point.tolist()}", np.max(np.abs(res.point - [2, 2])) <= 1e-5))
        checks.append((f"verdict {cert.verdict} after {len(log)} rounds", cert.verdict == "Certified" and len(log) <= 3))


def test_criterion_9_lsc(criterion):
    with criterion(9, "hull3d lsc refuted for X2, consistent for X1") as checks:
        code, rep, _ = cli("lsc", "hull3d")
        d = rep["result"]["distances"]
        checks.append((f"X2 refuted, min distance {min(d)}", rep["result"]["verdict"] == "LscRefuted" and min(d) >= 0.999))
        code, rep, _ = cli("lsc", "hull3d", "--control")
        checks.append(("X1 consistent", rep["result"]["verdict"] == "ConsistentWithLsc"))


def test_criterion_10_property_suites(criterion):
    with criterion(10, "property suites") as checks:
        for name, fn in (
            ("projection inequality, 500 cases", test_geometry.test_projection_variational_inequality_500_cases),
            ("gradient vs differences, 1000 cases", test_expr.test_gradient_matches_finite_differences_1000_cases),
        ):
            try:
                fn()
                checks.append((name, True))
            except AssertionError:
                checks.append((name, False))
        rng = np.random.default_rng(31337)
        red = svi = 0
        for _ in range(50):
            g = random_convex_game(rng)
            res, _ = solve_reduction(g, verify_tol=1e-5)
            red += verify_equilibrium(g, res.point, 1e-5).verdict == "Certified"
            svi += solve(g, "svi")[1].verdict == "Certified"
        checks.append((f"reduction certified {red}/50", red == 50))
        checks.append((f"svi certified {svi}/50", svi == 50))
        argv = ("coercive", "hyperbola", "--condition", "c0", "--budget", "60")
        checks.append(("byte-identical reports", cli(*argv)[2] == cli(*argv)[2]))
