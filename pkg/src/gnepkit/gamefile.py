"""TOML game files: parsing with positioned errors, serialization, bundled fixtures."""

from __future__ import annotations

import math
import re
import sys
from importlib import resources

import numpy as np
import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .expr import ExprSyntaxError, parse_expression
from .game import RosenGame
from .geometry import BlockStructure, set_from_dict

FIXTURES = ("aad2014", "cavazzuti", "diamond", "step", "qc-l1", "hull3d", "hyperbola", "wedge")


class GameFileError(ValueError):
    """Invalid game file; carries the section and 1-based line when known."""

    def __init__(self, message: str, section: str | None = None, line: int | None = None):
        self.section = section
        self.line = line
        where = []
        if section:
            where.append(f"[{section}]")
        if line:
            where.append(f"line {line}")
        super().__init__(f"{' '.join(where)}: {message}" if where else message)


def _section_lines(text: str) -> dict:
    out = {}
    for i, raw in enumerate(text.splitlines(), start=1):
        m = re.match(r"\s*\[([^\[\]]+)\]\s*(#.*)?$", raw)
        if m:
            out.setdefault(m.group(1).strip().replace('"', ""), i)
    return out


def _key_line(text: str, section: str, key: str, lines: dict) -> int | None:
    start = lines.get(section)
    if start is None:
        return None
    body = text.splitlines()[start:]
    for off, raw in enumerate(body):
        if re.match(r"\s*\[", raw):
            break
        if re.match(rf"\s*{re.escape(key)}\s*=", raw):
            return start + off + 1
    return start


def _floats(v) -> list:
    return [float(a) for a in v]


def parse_game(text: str, name: str = "game") -> RosenGame:
    """Build a game from game-file text."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise GameFileError(str(exc), None, int(m.group(1)) if m else None) from exc
    lines = _section_lines(text)

    def fail(msg, section, key=None):
        line = _key_line(text, section, key, lines) if key else lines.get(section)
        raise GameFileError(msg, section, line)

    g = doc.get("game")
    if not isinstance(g, dict):
        raise GameFileError("missing [game] section")
    players = g.get("players")
    if not isinstance(players, int) or players < 1:
        fail("players must be a positive integer", "game", "players")
    dims = g.get("dims", [1] * players)
    if not isinstance(dims, list) or len(dims) != players or not all(isinstance(d, int) and d > 0 for d in dims):
        fail("dims must list one positive integer per player", "game", "dims")
    n = sum(dims)
    blocks = BlockStructure(tuple(dims))

    objs = doc.get("objective", {})
    exprs = []
    for k in range(1, players + 1):
        sec = f"objective.{k}"
        entry = objs.get(str(k))
        if not isinstance(entry, dict) or "expr" not in entry:
            fail(f"objective of player {k} is missing", sec if entry is not None else "game")
        try:
            exprs.append(parse_expression(str(entry["expr"]), n))
        except ExprSyntaxError as exc:
            fail(f"{exc}", sec, "expr")

    s = doc.get("set")
    if not isinstance(s, dict):
        raise GameFileError("missing [set] section")
    try:
        X = set_from_dict(s, n)
    except (KeyError, TypeError, ValueError) as exc:
        fail(f"bad set description: {exc}", "set", "type")
    if X.dim != n:
        fail(f"set dimension {X.dim} differs from sum(dims) = {n}", "set", "type")

    wins = []
    wdoc = doc.get("windows", {})
    for k in range(1, players + 1):
        w = wdoc.get(str(k))
        if w is None:
            wins.append(None)
            continue
        sec = f"windows.{k}"
        try:
            lo, hi = np.array(_floats(w["lo"])), np.array(_floats(w["hi"]))
        except (KeyError, TypeError, ValueError):
            fail("window needs numeric lo and hi lists", sec)
        if lo.size != dims[k - 1] or hi.size != dims[k - 1] or np.any(lo > hi):
            fail(f"window of player {k} is malformed", sec)
        wins.append((lo, hi))

    meta = dict(doc.get("meta", {}))
    labels = tuple(meta.get("labels", ()))
    if labels and len(labels) != players:
        fail("labels must name every player", "meta", "labels")
    try:
        return RosenGame(blocks, X, tuple(exprs), tuple(wins), labels, str(g.get("name", name)), meta)
    except ValueError as exc:
        raise GameFileError(str(exc), "game", lines.get("game")) from exc


def _finite(v):
    return [a if math.isfinite(a) else (math.inf if a > 0 else -math.inf) for a in _floats(v)]


def _clean(obj):
    """Replace inf markers from set descriptions with TOML floats."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_clean(v) for v in obj]
    if obj == "inf":
        return math.inf
    if obj == "-inf":
        return -math.inf
    return obj


def game_to_dict(game: RosenGame) -> dict:
    doc = {
        "game": {"name": game.name, "players": game.players, "dims": list(game.blocks.dims)},
        "objective": {str(k + 1): {"expr": e.text} for k, e in enumerate(game.objectives)},
        "set": _clean(game.X.to_dict()),
        "windows": {str(k + 1): {"lo": _finite(lo), "hi": _finite(hi)} for k, (lo, hi) in enumerate(game.windows)},
    }
    meta = dict(game.meta)
    meta["labels"] = list(game.labels)
    doc["meta"] = meta
    return doc


def serialize_game(game: RosenGame) -> str:
    return tomli_w.dumps(game_to_dict(game))


def load_game(path_or_name: str) -> RosenGame:
    """Read a game file, or a bundled fixture when given its name."""
    if path_or_name in FIXTURES:
        return parse_game(fixture_text(path_or_name), path_or_name)
    try:
        with open(path_or_name, encoding="utf-8") as fh:
            text = fh.read()
    except FileNotFoundError:
        raise
    stem = re.sub(r"\.toml$", "", path_or_name.replace("\\", "/").rsplit("/", 1)[-1])
    return parse_game(text, stem)


def fixture_text(name: str) -> str:
    if name not in FIXTURES:
        raise KeyError(f"unknown fixture {name!r}")
    return resources.files("gnepkit.fixtures").joinpath(f"{name}.toml").read_text(encoding="utf-8")
