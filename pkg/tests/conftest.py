import numpy as np
import pytest

from gnepkit.expr import parse_expression
from gnepkit.game import RosenGame
from gnepkit.geometry import BlockStructure, Box, Intersection, Polyhedron


def _num(v: float) -> str:
    return f"({v:.12g})"


def random_convex_game(rng: np.random.Generator, coupling: float = 0.1) -> RosenGame:
    """Strongly convex quadratic players on a box cut by one shared budget row."""
    players = int(rng.integers(2, 4))
    dims = [int(rng.integers(1, 3)) for _ in range(players)]
    while sum(dims) > 6:
        dims[int(np.argmax(dims))] -= 1
    B = BlockStructure(tuple(dims))
    n = B.n
    exprs = []
    for nu in range(players):
        own = B.index(nu)
        L = rng.normal(size=(len(own), len(own)))
        Q = L @ L.T + np.eye(len(own))
        c = rng.uniform(-2, 2, len(own))
        terms = []
        for a, i in enumerate(own):
            for b, j in enumerate(own):
                terms.append(f"{_num(0.5 * Q[a, b])}*x{i + 1}*x{j + 1}")
            terms.append(f"{_num(c[a])}*x{i + 1}")
            for j in B.rival_index(nu):
                terms.append(f"{_num(coupling * rng.uniform(-1, 1))}*x{i + 1}*x{j + 1}")
        exprs.append(parse_expression(" + ".join(terms), n))
    box = Box(-np.ones(n), np.ones(n))
    a = rng.uniform(0.2, 1.0, n)
    shared = Polyhedron(a[None, :], np.array([rng.uniform(0.2, 1.0) * a.sum()]))
    X = Intersection((box, shared))
    return RosenGame(B, X, tuple(exprs), name="random-convex")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_configure(config):
    config.acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
