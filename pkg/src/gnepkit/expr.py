"""Objective expressions: parsing, printing, evaluation and derivatives.

Expressions are small arithmetic trees over flat profile variables
``x1 .. xn``.  Parsing produces an immutable tree; evaluation and forward
differentiation go through straight-line Python code generated from the
tree (one scalar kernel using :mod:`math`, one batch kernel using numpy).

Grammar (loosest to tightest)::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := ("-" | "+") unary | power
    power  := atom ("^" unary)?          # right associative
    atom   := number | xK | func "(" expr ("," expr)* ")" | "(" expr ")"
    func   := abs | sqrt | exp | log | min | max
"""

from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

KINK_TOL = 1e-9
_MAX_INT_POWER = 64

UNARY_FUNCS = ("abs", "sqrt", "exp", "log")
NARY_FUNCS = ("min", "max")


class ExprSyntaxError(ValueError):
    """Parse failure; ``column`` is 1-based."""

    def __init__(self, message: str, column: int, text: str = ""):
        self.column = column
        self.text = text
        super().__init__(f"{message} (column {column})")


class ExprDomainError(ArithmeticError):
    """Evaluation left the domain of a sub-expression."""

    def __init__(self, message: str, subexpr: str = "", point=None):
        self.subexpr = subexpr
        self.point = None if point is None else [float(v) for v in np.ravel(point)]
        detail = f" in '{subexpr}'" if subexpr else ""
        where = f" at {self.point}" if self.point is not None else ""
        super().__init__(f"{message}{detail}{where}")


class NonsmoothWarning(RuntimeWarning):
    """A kink node (abs/min/max) is active at the differentiation point."""


# ---------------------------------------------------------------------------
# tree
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    index: int  # 0-based flat index


@dataclass(frozen=True)
class Unary:
    op: str  # neg, abs, sqrt, exp, log
    arg: "Node"


@dataclass(frozen=True)
class Binary:
    op: str  # + - * / ^
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class NAry:
    op: str  # min, max
    args: tuple


Node = Const | Var | Unary | Binary | NAry


def to_text(node: Node) -> str:
    """Fully parenthesised text that parses back to the same values."""
    if isinstance(node, Const):
        v = node.value
        return repr(v) if v >= 0 else f"(-{repr(-v)})"
    if isinstance(node, Var):
        return f"x{node.index + 1}"
    if isinstance(node, Unary):
        if node.op == "neg":
            return f"(-{to_text(node.arg)})"
        return f"{node.op}({to_text(node.arg)})"
    if isinstance(node, Binary):
        return f"({to_text(node.left)} {node.op} {to_text(node.right)})"
    return f"{node.op}(" + ", ".join(to_text(a) for a in node.args) + ")"


def _children(node: Node) -> tuple:
    if isinstance(node, Unary):
        return (node.arg,)
    if isinstance(node, Binary):
        return (node.left, node.right)
    if isinstance(node, NAry):
        return node.args
    return ()


def variables_of(node: Node) -> frozenset:
    if isinstance(node, Var):
        return frozenset((node.index,))
    out = frozenset()
    for c in _children(node):
        out = out | variables_of(c)
    return out


def _const_value(node: Node):
    """Value of a variable-free subtree, or None if it has variables or fails."""
    if variables_of(node):
        return None
    try:
        return _ObjectiveCode(node, 0).scalar_value(())
    except (ExprDomainError, ZeroDivisionError, ValueError, OverflowError):
        return None


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),]))"
)


def _tokenize(text: str):
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            bad = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise ExprSyntaxError(f"unexpected character {text[bad]!r}", bad + 1, text)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start + 1))
        pos = m.end()
    tokens.append(("end", "", len(text) + 1))
    return tokens


class _Parser:
    def __init__(self, text: str, dim: int):
        self.text = text
        self.dim = dim
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, val, col = self.take()
        if val != value or kind == "end":
            found = "end of input" if kind == "end" else repr(val)
            raise ExprSyntaxError(f"expected {value!r}, found {found}", col, self.text)

    def parse(self) -> Node:
        node = self.expr()
        kind, val, col = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected {val!r}", col, self.text)
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = Binary(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = Binary(op, node, self.unary())
        return node

    def unary(self) -> Node:
        kind, val, _ = self.peek()
        if kind == "op" and val == "-":
            self.take()
            return Unary("neg", self.unary())
        if kind == "op" and val == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            return Binary("^", base, self.unary())
        return base

    def atom(self) -> Node:
        kind, val, col = self.take()
        if kind == "num":
            return Const(float(val))
        if kind == "name":
            if val in UNARY_FUNCS or val in NARY_FUNCS:
                self.expect("(")
                args = [self.expr()]
                while self.peek()[1] == ",":
                    self.take()
                    args.append(self.expr())
                self.expect(")")
                if val in UNARY_FUNCS:
                    if len(args) != 1:
                        raise ExprSyntaxError(f"{val} takes one argument", col, self.text)
                    return Unary(val, args[0])
                return NAry(val, tuple(args))
            m = re.fullmatch(r"x(\d+)", val)
            if m:
                k = int(m.group(1))
                if not 1 <= k <= self.dim:
                    raise ExprSyntaxError(
                        f"variable {val} out of range (dimension {self.dim})", col, self.text)
                return Var(k - 1)
            raise ExprSyntaxError(f"unknown identifier {val!r}", col, self.text)
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect(")")
            return node
        found = "end of input" if kind == "end" else repr(val)
        raise ExprSyntaxError(f"unexpected {found}", col, self.text)


# ---------------------------------------------------------------------------
# code generation
# ---------------------------------------------------------------------------

class _Dom(Exception):
    def __init__(self, node_id: int, message: str):
        self.node_id = node_id
        self.message = message


def _sgn(a):
    return 1.0 if a > 0 else (-1.0 if a < 0 else 0.0)


def _first_min(vals):
    best = 0
    for k in range(1, len(vals)):
        if vals[k] < vals[best]:
            best = k
    return best


def _first_max(vals):
    best = 0
    for k in range(1, len(vals)):
        if vals[k] > vals[best]:
            best = k
    return best


def _tie(vals, k):
    return any(j != k and abs(vals[j] - vals[k]) <= KINK_TOL for j in range(len(vals)))


class _Emitter:
    """Straight-line code for value and (optionally) forward derivatives."""

    def __init__(self, root: Node, dim: int, batch: bool, grad: bool):
        self.root = root
        self.dim = dim
        self.batch = batch
        self.grad = grad
        self.lines: list[str] = []
        self.nodes: list[Node] = []
        self.m = "np" if batch else "math"

    def var(self, k: int) -> str:
        return f"v{k}"

    def check(self, cond_bad: str, k: int, message: str):
        # cond_bad is an expression true where the domain is violated
        if self.batch:
            self.lines.append(f"bad |= {cond_bad}")
        else:
            self.lines.append(f"if {cond_bad}: raise _Dom({k}, {message!r})")

    def kink(self, cond: str, k: int):
        if not self.grad:
            return
        if self.batch:
            self.lines.append(f"if np.any({cond}): kinks.append({k})")
        else:
            self.lines.append(f"if {cond}: kinks.append({k})")

    def chain(self, a: str, p: int) -> str:
        if p == 0:
            return "1.0"
        return "(" + "*".join([a] * p) + ")"

    def emit(self, node: Node) -> tuple[str, dict]:
        kids = [self.emit(c) for c in _children(node)]
        k = len(self.nodes)
        self.nodes.append(node)
        v = self.var(k)
        m = self.m
        L = self.lines
        d: dict[int, str] = {}
        if isinstance(node, Const):
            L.append(f"{v} = {node.value!r}")
            if self.batch:
                L.append(f"{v} = np.full(nrow, {v})")
            return v, d
        if isinstance(node, Var):
            L.append(f"{v} = x[:, {node.index}]" if self.batch else f"{v} = x[{node.index}]")
            if self.grad:
                d[node.index] = "1.0"
            return v, d
        if isinstance(node, Unary):
            a, da = kids[0]
            op = node.op
            if op == "neg":
                L.append(f"{v} = -{a}")
                for i, g in da.items():
                    d[i] = self._new(k, i, f"-{g}")
            elif op == "abs":
                L.append(f"{v} = {'np.abs' if self.batch else 'abs'}({a})")
                self.kink(f"abs({a}) <= {KINK_TOL}" if not self.batch
                          else f"np.abs({a}) <= {KINK_TOL}", k)
                sg = f"np.sign({a})" if self.batch else f"_sgn({a})"
                for i, g in da.items():
                    d[i] = self._new(k, i, f"{sg}*{g}")
            elif op == "sqrt":
                self.check(f"{a} < 0" if self.batch else f"not ({a} >= 0)", k,
                           "square root of a negative number")
                L.append(f"{v} = {m}.sqrt({a})")
                if da and self.grad:
                    self.check(f"{v} == 0", k, "square root is not differentiable at 0")
                for i, g in da.items():
                    d[i] = self._new(k, i, f"{g}/(2.0*{v})")
            elif op == "exp":
                L.append(f"{v} = {m}.exp({a})")
                for i, g in da.items():
                    d[i] = self._new(k, i, f"{v}*{g}")
            elif op == "log":
                self.check(f"{a} <= 0" if self.batch else f"not ({a} > 0)", k,
                           "logarithm of a non-positive number")
                L.append(f"{v} = {m}.log({a})")
                for i, g in da.items():
                    d[i] = self._new(k, i, f"{g}/{a}")
            return v, d
        if isinstance(node, Binary):
            (a, da), (b, db) = kids
            op = node.op
            if op in "+-":
                L.append(f"{v} = {a} {op} {b}")
                for i in sorted(set(da) | set(db)):
                    if i in da and i in db:
                        d[i] = self._new(k, i, f"{da[i]} {op} {db[i]}")
                    elif i in da:
                        d[i] = da[i]
                    else:
                        d[i] = self._new(k, i, f"-{db[i]}") if op == "-" else db[i]
            elif op == "*":
                L.append(f"{v} = {a}*{b}")
                for i in sorted(set(da) | set(db)):
                    parts = []
                    if i in da:
                        parts.append(f"{da[i]}*{b}")
                    if i in db:
                        parts.append(f"{a}*{db[i]}")
                    d[i] = self._new(k, i, " + ".join(parts))
            elif op == "/":
                self.check(f"{b} == 0" if self.batch else f"not ({b} != 0)", k, "division by zero")
                L.append(f"{v} = {a}/{b}")
                for i in sorted(set(da) | set(db)):
                    num = da.get(i, "0.0")
                    if i in db:
                        num = f"({num} - {v}*{db[i]})"
                    d[i] = self._new(k, i, f"{num}/{b}")
            else:
                self._power(node, k, v, a, da, b, db, d)
            return v, d
        # NAry
        vals = [kid[0] for kid in kids]
        tup = "(" + ", ".join(vals) + ("," if len(vals) == 1 else "") + ")"
        if self.batch:
            fn = "np.minimum" if node.op == "min" else "np.maximum"
            L.append(f"{v} = {vals[0]}")
            for w in vals[1:]:
                L.append(f"{v} = {fn}({v}, {w})")
            if self.grad and len(vals) > 1:
                pick = "np.argmin" if node.op == "min" else "np.argmax"
                L.append(f"_s{k} = np.stack({tup})")
                L.append(f"_p{k} = {pick}(_s{k}, axis=0)")
                L.append(f"_c{k} = np.sum(np.abs(_s{k} - {v}) <= {KINK_TOL}, axis=0)")
                self.kink(f"_c{k} > 1", k)
        else:
            L.append(f"{v} = {node.op}{tup}")
            if self.grad and len(vals) > 1:
                pick = "_first_min" if node.op == "min" else "_first_max"
                L.append(f"_p{k} = {pick}({tup})")
                self.kink(f"_tie({tup}, _p{k})", k)
        if self.grad:
            for i in sorted(set().union(*[kid[1] for kid in kids])):
                opts = [kid[1].get(i, "0.0") for kid in kids]
                if len(opts) == 1:
                    d[i] = opts[0]
                elif self.batch:
                    stacked = "np.stack((" + ", ".join(
                        f"np.broadcast_to({o}, (nrow,))" for o in opts) + "))"
                    d[i] = self._new(k, i, f"np.take_along_axis({stacked}, _p{k}[None, :], 0)[0]")
                else:
                    d[i] = self._new(k, i, "(" + ", ".join(opts) + ")" + f"[_p{k}]")
        return v, d

    def _power(self, node, k, v, a, da, b, db, d):
        L = self.lines
        m = self.m
        c = _const_value(node.right)
        if c is not None and float(c).is_integer() and abs(c) <= _MAX_INT_POWER:
            p = int(c)
            if p >= 0:
                L.append(f"{v} = {self.chain(a, p)}")
            else:
                self.check(f"{a} == 0" if self.batch else f"not ({a} != 0)", k,
                           "zero raised to a negative power")
                L.append(f"{v} = 1.0/{self.chain(a, -p)}")
            for i, g in da.items():
                if p == 0:
                    continue
                if p > 0:
                    d[i] = self._new(k, i, f"{float(p)!r}*{self.chain(a, p - 1)}*{g}")
                else:
                    d[i] = self._new(k, i, f"{float(p)!r}*{v}/{a}*{g}")
            return
        if c is not None:
            self.check(f"{a} < 0" if self.batch else f"not ({a} >= 0)", k,
                       "negative base with non-integer exponent")
            if c < 0:
                self.check(f"{a} == 0", k, "zero raised to a negative power")
            L.append(f"{v} = {m}.pow({a}, {b})" if not self.batch else f"{v} = np.power({a}, {b})")
            if da and self.grad and c < 1:
                self.check(f"{a} == 0", k, "power is not differentiable at 0")
            for i, g in da.items():
                d[i] = self._new(k, i, f"{b}*{m}.pow({a}, {b} - 1.0)*{g}" if not self.batch
                                 else f"{b}*np.power({a}, {b} - 1.0)*{g}")
            return
        # variable exponent
        self.check(f"{a} < 0" if self.batch else f"not ({a} >= 0)", k,
                   "negative base with variable exponent")
        self.check(f"({a} == 0) & ({b} < 0)" if self.batch else f"{a} == 0 and {b} < 0", k,
                   "zero raised to a negative power")
        L.append(f"{v} = {m}.pow({a}, {b})" if not self.batch else f"{v} = np.power({a}, {b})")
        if not self.grad:
            return
        if da:
            self.check(f"{a} == 0", k, "power is not differentiable at a zero base")
        for i in sorted(set(da) | set(db)):
            parts = []
            if i in db:
                if self.batch:
                    parts.append(f"np.where({a} > 0, {v}*np.log(np.where({a} > 0, {a}, 1.0)), 0.0)*{db[i]}")
                else:
                    parts.append(f"({v}*math.log({a}) if {a} > 0 else 0.0)*{db[i]}")
            if i in da:
                parts.append(f"{b}*{v}/{a}*{da[i]}")
            d[i] = self._new(k, i, " + ".join(parts))
        if db:
            # 0^b jumps at b = 0
            self.kink(f"({a} == 0) & (np.abs({b}) <= {KINK_TOL})" if self.batch
                      else f"{a} == 0 and abs({b}) <= {KINK_TOL}", k)

    def _new(self, k: int, i: int, code: str) -> str:
        name = f"d{k}_{i}"
        self.lines.append(f"{name} = {code}")
        return name

    def source(self, name: str) -> str:
        v, d = self.emit(self.root)
        head = f"def {name}(x, kinks):" if self.grad else f"def {name}(x):"
        body = []
        if self.batch:
            body.append("nrow = x.shape[0]")
            body.append("bad = np.zeros(nrow, dtype=bool)")
        body += self.lines
        if self.grad:
            if self.batch:
                gs = ", ".join(f"np.broadcast_to({d[i]}, (nrow,))" if i in d else "zeros"
                               for i in range(self.dim))
                body.append("zeros = np.zeros(nrow)")
                if self.dim:
                    body.append(f"return {v}, np.stack(({gs},), axis=1), bad")
                else:
                    body.append(f"return {v}, np.zeros((nrow, 0)), bad")
            else:
                gs = ", ".join(d.get(i, "0.0") for i in range(self.dim))
                body.append(f"return {v}, [{gs}]")
        else:
            body.append(f"return ({v}, bad)" if self.batch else f"return {v}")
        return head + "\n" + "\n".join("    " + ln for ln in body) + "\n"


class _ObjectiveCode:
    """Compiled kernels for one tree (built lazily)."""

    _ENV = {"math": math, "np": np, "_Dom": _Dom, "_sgn": _sgn,
            "_first_min": _first_min, "_first_max": _first_max, "_tie": _tie}

    def __init__(self, root: Node, dim: int):
        self.root = root
        self.dim = dim
        self._cache: dict = {}
        self._nodes: list[Node] | None = None

    def _build(self, batch: bool, grad: bool):
        key = (batch, grad)
        if key not in self._cache:
            em = _Emitter(self.root, self.dim, batch, grad)
            src = em.source("_kernel")
            env = dict(self._ENV)
            exec(compile(src, "<objective>", "exec"), env)
            self._cache[key] = env["_kernel"]
            self._nodes = em.nodes
        return self._cache[key]

    def node_text(self, node_id: int) -> str:
        if self._nodes is None:
            self._build(False, False)
        return to_text(self._nodes[node_id])

    def scalar_value(self, x):
        try:
            return self._build(False, False)(x)
        except _Dom as exc:
            raise ExprDomainError(exc.message, self.node_text(exc.node_id), x) from None
        except (ValueError, OverflowError, ZeroDivisionError) as exc:
            raise ExprDomainError(str(exc), to_text(self.root), x) from None


# ---------------------------------------------------------------------------
# public API
# ---------------------------------------------------------------------------

class ObjectiveExpr:
    """Parsed objective over flat profile variables.

    Parameters
    ----------
    root : Node
        Expression tree.
    dim : int
        Ambient dimension the variable indices refer to.
    """

    def __init__(self, root: Node, dim: int, text: str | None = None):
        self.root = root
        self.dim = int(dim)
        self.variables = tuple(sorted(variables_of(root)))
        self.arity = self.variables[-1] + 1 if self.variables else 0
        if self.arity > self.dim:
            raise ValueError(f"variable x{self.arity} exceeds dimension {self.dim}")
        self.text = text if text is not None else to_text(root)
        self._code = _ObjectiveCode(root, self.dim)

    def __repr__(self):
        return f"ObjectiveExpr({self.text!r}, dim={self.dim})"

    def __str__(self):
        return to_text(self.root)

    def __getstate__(self):
        return {"root": self.root, "dim": self.dim, "text": self.text}

    def __setstate__(self, state):
        self.__init__(state["root"], state["dim"], state["text"])

    # -- evaluation --------------------------------------------------------

    def evaluate(self, x) -> float:
        if len(x) < self.arity:
            raise ValueError(f"point has {len(x)} entries, expression needs {self.arity}")
        xs = [float(v) for v in x]
        return float(self._code.scalar_value(xs))

    __call__ = evaluate

    def evaluate_batch(self, X, errors: str = "raise") -> np.ndarray:
        """Evaluate at the rows of ``X``.

        With ``errors="nan"`` rows outside the domain get NaN instead of
        raising :class:`ExprDomainError`.
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] < self.arity:
            raise ValueError(f"points have {X.shape[1]} entries, expression needs {self.arity}")
        fn = self._code._build(True, False)
        with np.errstate(all="ignore"):
            vals, bad = fn(X)
        vals = np.array(np.broadcast_to(vals, (X.shape[0],)), dtype=float)
        if np.any(bad):
            if errors == "raise":
                row = int(np.flatnonzero(bad)[0])
                self.evaluate(X[row])  # raises with the offending sub-expression
            vals[bad] = np.nan
        return vals

    def value_and_gradient(self, x, warn: bool = True) -> tuple[float, np.ndarray]:
        n = max(len(x), self.arity)
        xs = [float(v) for v in x]
        kinks: list[int] = []
        fn = self._code._build(False, True)
        try:
            val, grad = fn(xs, kinks)
        except _Dom as exc:
            raise ExprDomainError(exc.message, self._code.node_text(exc.node_id), xs) from None
        except (ValueError, OverflowError, ZeroDivisionError) as exc:
            raise ExprDomainError(str(exc), self.text, xs) from None
        if kinks and warn:
            warnings.warn(
                f"nonsmooth point: '{self._code.node_text(kinks[0])}' is at a kink at {xs}",
                NonsmoothWarning, stacklevel=3)
        g = np.zeros(n)
        g[: self.dim] = grad[:n] if n < self.dim else grad
        return float(val), g

    def gradient(self, x, block=None, warn: bool = True) -> np.ndarray:
        """Gradient at ``x``; ``block`` restricts to a slice or index list."""
        _, g = self.value_and_gradient(x, warn=warn)
        return g if block is None else g[block]

    def gradient_batch(self, X, warn: bool = False):
        """Values, gradients (rows) and a domain-violation mask for rows of ``X``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        fn = self._code._build(True, True)
        kinks: list[int] = []
        with np.errstate(all="ignore"):
            vals, grads, bad = fn(X, kinks)
        vals = np.array(np.broadcast_to(vals, (X.shape[0],)), dtype=float)
        grads = np.array(grads, dtype=float)
        if grads.shape[1] < X.shape[1]:
            grads = np.hstack([grads, np.zeros((X.shape[0], X.shape[1] - grads.shape[1]))])
        if kinks and warn:
            warnings.warn("nonsmooth point in batch gradient", NonsmoothWarning, stacklevel=2)
        vals[bad] = np.nan
        grads[bad] = np.nan
        return vals, grads, bad

    @property
    def is_smooth(self) -> bool:
        """False when the tree holds a kink node or a variable exponent."""

        def walk(node):
            if isinstance(node, NAry) or (isinstance(node, Unary) and node.op == "abs"):
                return False
            if isinstance(node, Binary) and node.op == "^" and _const_value(node.right) is None:
                return False
            return all(walk(c) for c in _children(node))

        return walk(self.root)

    # -- transformations ---------------------------------------------------

    def restrict(self, keep: Sequence[int], fixed: dict) -> "ObjectiveExpr":
        """Substitute constants for the ``fixed`` indices and renumber ``keep``.

        The result is an expression over ``len(keep)`` variables where
        new variable ``j`` is old variable ``keep[j]``.
        """
        remap = {old: new for new, old in enumerate(keep)}

        def walk(node):
            if isinstance(node, Var):
                if node.index in remap:
                    return Var(remap[node.index])
                if node.index in fixed:
                    val = float(fixed[node.index])
                    return Const(val) if val >= 0 else Unary("neg", Const(-val))
                raise KeyError(f"variable x{node.index + 1} neither kept nor fixed")
            if isinstance(node, Unary):
                return Unary(node.op, walk(node.arg))
            if isinstance(node, Binary):
                return Binary(node.op, walk(node.left), walk(node.right))
            if isinstance(node, NAry):
                return NAry(node.op, tuple(walk(a) for a in node.args))
            return node

        return ObjectiveExpr(walk(self.root), len(keep))


def parse_expression(text: str, dim: int) -> ObjectiveExpr:
    """Parse ``text`` into an expression over ``x1 .. x{dim}``."""
    if not text or not text.strip():
        raise ExprSyntaxError("empty expression", 1, text or "")
    if dim < 1:
        raise ValueError("dimension must be positive")
    root = _Parser(text, dim).parse()
    return ObjectiveExpr(root, dim, text)


def evaluate(e: ObjectiveExpr, x) -> float:
    return e.evaluate(x)


def gradient(e: ObjectiveExpr, x, block=None) -> np.ndarray:
    return e.gradient(x, block=block)


def fd_gradient(e: ObjectiveExpr, x, block=None) -> np.ndarray:
    """Central finite differences, step ``1e-6 * max(1, |x_i|)``."""
    x = np.asarray(x, dtype=float)
    idx = range(len(x)) if block is None else np.arange(len(x))[block]
    out = []
    for i in idx:
        h = 1e-6 * max(1.0, abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        out.append((e.evaluate(xp) - e.evaluate(xm)) / (xp[i] - xm[i]))
    return np.array(out)
