"""Command-line front end: ``gnepkit <command> GAME ...`` writes a JSON report to stdout."""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from .coercive import CONDITIONS, check_condition, implication_audit, solve_unbounded
from .gamefile import FIXTURES, GameFileError, fixture_text, load_game
from .geometry import lsc_probe
from .levelsets import AtArgminError, ConeKind, adjustment_radius, cone_direction, cone_test
from .nash import METHODS, VERIFY_TOL, solve, verify_equilibrium
from .vi import GradientStack, QcAdjusted, QcStrict, minty_qvi_test, minty_test

DEFAULT_SEED = 42
OK_VERDICTS = {"Certified", "Consistent", "ConsistentAtBudget", "ConsistentWithLsc", "Converged", "Listed", "Written"}


class UsageError(Exception):
    pass


def parse_point(text: str, n: int | None = None) -> np.ndarray:
    try:
        x = np.array([float(t) for t in text.split(",") if t.strip()], dtype=float)
    except ValueError as exc:
        raise UsageError(f"cannot parse point {text!r}") from exc
    if n is not None and x.size != n:
        raise UsageError(f"point {text!r} has {x.size} entries, expected {n}")
    return x


def parse_path(text: str) -> np.ndarray:
    return np.array([parse_point(p) for p in text.split(";") if p.strip()])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _fmt(x) -> str:
    return "(" + ", ".join(f"{v:.6g}" for v in np.asarray(x, dtype=float)) + ")"


def _player(game, k: int) -> int:
    if not 1 <= k <= game.players:
        raise UsageError(f"player must be between 1 and {game.players}")
    return k - 1


# ---------------------------------------------------------------------------
# commands; each returns (result, verdict, summary)


def cmd_solve(args, game, seed):
    x0 = parse_point(args.x0, game.n) if args.x0 else None
    if args.unbounded:
        res, cert, log = solve_unbounded(game, args.rho0, args.growth, args.max_rounds, args.method, args.verify_tol, seed)
        result = {"solve": res.to_dict(), "certificate": cert.to_dict(), "rounds": log}
    else:
        res, cert = solve(game, args.method, x0, args.tol, args.max_iter, seed, args.verify_tol, args.multistarts, args.budget)
        result = {"solve": res.to_dict(), "certificate": cert.to_dict()}
    verdict = cert.verdict
    result["verdict"] = verdict
    summary = f"{args.method}: {res.to_dict()['status']} at {_fmt(res.point)}; {verdict}, max regret {cert.max_regret:.3g}"
    return result, verdict, summary


def cmd_verify(args, game, seed):
    x = parse_point(args.point, game.n)
    cert = verify_equilibrium(game, x, args.tol, args.multistarts, seed)
    regrets = ", ".join("-" if r is None else f"{r:.6g}" for r in cert.regrets)
    return cert.to_dict(), cert.verdict, f"{cert.verdict} at {_fmt(x)}; regrets [{regrets}]"


def cmd_cones(args, game, seed):
    kind = ConeKind(args.kind.capitalize())
    nu = _player(game, args.player)
    x = parse_point(args.point, game.n)
    result = {"player": args.player}
    if args.direction:
        u = parse_point(args.direction, game.blocks.dims[nu])
        v = cone_test(game, nu, x, u, kind, budget=args.budget, tol=args.tol, seed=seed)
        result["test"] = v.to_dict()
        verdict = v.verdict
        summary = f"{args.kind} cone test of u={_fmt(u)}: {verdict}"
    else:
        d = cone_direction(game, nu, x, kind, budget=args.budget, seed=seed, tol=args.tol)
        result["direction"] = d.to_dict()
        if d.at_argmin:
            verdict = "Consistent"
            summary = "block is at an argmin of its objective; only the zero vector is forced"
        else:
            verdict = "Consistent" if d.certified else "Refuted"
            summary = f"{args.kind} normal direction {_fmt(d.u)}, certified={d.certified}"
    if args.radius:
        try:
            result["adjustment_radius"] = adjustment_radius(game, nu, x, budget=args.budget, seed=seed)
        except AtArgminError as exc:
            result["adjustment_radius"] = None
            result["radius_note"] = str(exc)
    result["verdict"] = verdict
    return result, verdict, summary


def _grid(game, step: float) -> np.ndarray:
    lo, hi = game.full_window()
    axes = [np.linspace(a, b, int(round((b - a) / step)) + 1) for a, b in zip(lo, hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=1)


def cmd_minty(args, game, seed):
    x = parse_point(args.point, game.n)
    if args.mode == "vi":
        M = {"gradient": lambda: GradientStack(game),
             "qc-strict": lambda: QcStrict(game, None, 2000, seed),
             "qc-adjusted": lambda: QcAdjusted(game, None, 2000, seed)}[args.map]()
        grid = _grid(game, args.grid_step) if args.grid_step else None
        r = minty_test(M, game.X, x, args.budget, args.tol, seed, grid, game.full_window())
    else:
        r = minty_qvi_test(game, x, ConeKind(args.cones.capitalize()), args.budget, args.tol, seed)
    result = r.to_dict()
    result["mode"] = args.mode
    return result, r.verdict, f"Minty {args.mode} test at {_fmt(x)}: {r.verdict}, min value {r.value:.6g}"


def cmd_coercive(args, game, seed):
    rho = args.rho if args.rho is not None else game.meta.get("rho")
    if rho is None:
        raise UsageError("--rho is required for this game")
    which = args.condition.upper()
    probes = game.meta.get("probes", {}).get(which)
    v = check_condition(game, which, float(rho), args.budget, seed, probes)
    result = {"check": v.to_dict()}
    if args.audit:
        result["audit"] = implication_audit(game, float(rho), args.budget, seed, args.x_equals_k,
                                            game.meta.get("probes", {}).get("product"))
    result["verdict"] = v.verdict
    where = f" witness {_fmt(v.witness_x)}" if v.witness_x is not None else ""
    return result, v.verdict, f"{which} at rho={float(rho):.6g}: {v.verdict}{where}"


def cmd_lsc(args, game, seed):
    entry = dict(game.meta.get("lsc_control" if args.control else "lsc", {}))
    player = args.player or entry.get("player")
    at = parse_point(args.at) if args.at else np.asarray(entry.get("at", []), dtype=float)
    z0 = parse_point(args.z0) if args.z0 else np.asarray(entry.get("z0", []), dtype=float)
    path = parse_path(args.path) if args.path else np.asarray(entry.get("path", []), dtype=float)
    tol = args.tol if args.tol is not None else float(entry.get("tol", 1e-3))
    if not player or at.size == 0 or z0.size == 0 or path.size == 0:
        raise UsageError("lsc needs --player, --at, --z0 and --path (or a game with an lsc entry)")
    nu = _player(game, int(player))
    try:
        rep = lsc_probe(game.X, game.blocks, nu, at, z0, path, tol, args.delta)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    result = rep.to_dict()
    result["player"] = int(player)
    return result, rep.verdict, f"lsc of slice map {player}: {rep.verdict}, tail min distance {min(rep.distances):.6g}"


def cmd_examples(args, game, seed):
    if args.list or not args.name:
        return {"fixtures": list(FIXTURES)}, "Listed", "\n".join(FIXTURES)
    if args.name not in FIXTURES:
        raise UsageError(f"unknown example {args.name!r}")
    out = Path(args.dir) / f"{args.name}.toml"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(fixture_text(args.name), encoding="utf-8")
    return {"written": str(out)}, "Written", f"wrote {out}"


COMMANDS = {
    "solve": cmd_solve,
    "verify": cmd_verify,
    "cones": cmd_cones,
    "minty": cmd_minty,
    "coercive": cmd_coercive,
    "lsc": cmd_lsc,
    "examples": cmd_examples,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="random seed (default: $GNEP_SEED or 42)")
    common.add_argument("--no-timestamp", action="store_true", help="omit wall time so reports compare byte for byte")

    p = argparse.ArgumentParser(prog="gnepkit", description="Solve and certify equilibria of shared-constraint games.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", parents=[common], help="compute and certify an equilibrium")
    s.add_argument("game")
    s.add_argument("--method", choices=METHODS, default="svi")
    s.add_argument("--x0")
    s.add_argument("--tol", type=float, default=1e-9)
    s.add_argument("--verify-tol", type=float, default=VERIFY_TOL)
    s.add_argument("--max-iter", type=int)
    s.add_argument("--multistarts", type=int, default=16)
    s.add_argument("--budget", type=int, default=2000)
    s.add_argument("--unbounded", action="store_true", help="solve on growing balls and certify on the full set")
    s.add_argument("--rho0", type=float, default=1.0)
    s.add_argument("--growth", type=float, default=2.0)
    s.add_argument("--max-rounds", type=int, default=10)

    v = sub.add_parser("verify", parents=[common], help="regret certificate at a point")
    v.add_argument("game")
    v.add_argument("--point", required=True)
    v.add_argument("--tol", type=float, default=VERIFY_TOL)
    v.add_argument("--multistarts", type=int, default=16)

    c = sub.add_parser("cones", parents=[common], help="level-set normal cones of one player")
    c.add_argument("game")
    c.add_argument("--player", type=int, default=1)
    c.add_argument("--point", required=True)
    c.add_argument("--kind", choices=[k.value.lower() for k in ConeKind], default="strict")
    c.add_argument("--direction", help="test this vector instead of computing a normal")
    c.add_argument("--budget", type=int, default=20000)
    c.add_argument("--tol", type=float, default=1e-7)
    c.add_argument("--radius", action="store_true", help="also report the adjustment radius")

    m = sub.add_parser("minty", parents=[common], help="Minty variational test at a point")
    m.add_argument("game")
    m.add_argument("--point", required=True)
    m.add_argument("--mode", choices=["vi", "qvi"], default="vi")
    m.add_argument("--map", choices=["gradient", "qc-strict", "qc-adjusted"], default="gradient")
    m.add_argument("--cones", choices=[k.value.lower() for k in ConeKind], default="plain")
    m.add_argument("--budget", type=int, default=20000)
    m.add_argument("--grid-step", type=float)
    m.add_argument("--tol", type=float, default=1e-9)

    k = sub.add_parser("coercive", parents=[common], help="sampled coerciveness checks at a radius")
    k.add_argument("game")
    k.add_argument("--condition", choices=[c.lower() for c in CONDITIONS] + list(CONDITIONS), default="c0")
    k.add_argument("--rho", type=float)
    k.add_argument("--budget", type=int, default=200)
    k.add_argument("--audit", action="store_true", help="also audit the implications between conditions")
    k.add_argument("--x-equals-k", action="store_true", help="assert that the shared set equals the product set")

    lsc = sub.add_parser("lsc", parents=[common], help="lower semicontinuity probe of a slice map")
    lsc.add_argument("game")
    lsc.add_argument("--player", type=int)
    lsc.add_argument("--at")
    lsc.add_argument("--z0")
    lsc.add_argument("--path", help="rival points separated by ';'")
    lsc.add_argument("--tol", type=float)
    lsc.add_argument("--delta", type=float)
    lsc.add_argument("--control", action="store_true", help="use the game's control path instead")

    e = sub.add_parser("examples", parents=[common], help="list or write the bundled games")
    e.add_argument("name", nargs="?")
    e.add_argument("--list", action="store_true")
    e.add_argument("--dir", default=".")
    return p


def resolve_seed(arg_seed) -> int:
    if arg_seed is not None:
        return int(arg_seed)
    env = os.environ.get("GNEP_SEED")
    if env:
        try:
            return int(env)
        except ValueError as exc:
            raise UsageError(f"GNEP_SEED must be an integer, got {env!r}") from exc
    return DEFAULT_SEED


def run_cli(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    t0 = time.perf_counter()
    try:
        seed = resolve_seed(args.seed)
        game = None
        if args.command != "examples":
            game = load_game(args.game)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            result, verdict, summary = COMMANDS[args.command](args, game, seed)
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename}", file=stderr)
        return 2
    except (GameFileError, UsageError) as exc:
        print(f"error: {exc}", file=stderr)
        return 2
    notes = []
    if game is not None and game.meta.get("paper_discrepancy"):
        notes.append(f"paper_discrepancy: {game.meta['paper_discrepancy']}")
    for w in caught:
        msg = f"{w.category.__name__}: {w.message}"
        if msg not in notes:
            notes.append(msg)
    config = {k: v for k, v in vars(args).items() if k not in ("seed",)}
    config["seed"] = seed
    report = {
        "command": ["gnepkit", *argv],
        "config": config,
        "result": result,
        "warnings": notes,
        "wall_ms": None if args.no_timestamp else round(1000 * (time.perf_counter() - t0), 3),
    }
    stdout.write(json.dumps(_jsonable(report), indent=2) + "\n")
    label = f"{args.command} {getattr(args, 'game', '') or ''}".strip()
    print(f"{label}: {summary}", file=stderr)
    for n in notes:
        print(f"warning: {n}", file=stderr)
    return 0 if verdict in OK_VERDICTS else 1


def main() -> None:
    sys.exit(run_cli())
