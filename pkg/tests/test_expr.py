import warnings

import numpy as np
import pytest

from gnepkit.expr import (
    ExprDomainError,
    ExprSyntaxError,
    NonsmoothWarning,
    fd_gradient,
    parse_expression,
    to_text,
)


def test_evaluate_simple():
    e = parse_expression("(x1 - 2)^2 + 3*x2", 2)
    assert e.evaluate([0.0, 1.0]) == pytest.approx(7.0)
    assert e.arity == 2


def test_precedence_and_unary_minus():
    e = parse_expression("-x1^2 + 2*3", 1)
    assert e.evaluate([3.0]) == pytest.approx(-3.0)
    assert parse_expression("2^3^2", 1).evaluate([0.0]) == pytest.approx(512.0)


def test_functions():
    e = parse_expression("min(abs(x1) + abs(x2), 1)", 2)
    assert e.evaluate([0.25, -0.5]) == pytest.approx(0.75)
    assert e.evaluate([10.0, 0.0]) == pytest.approx(1.0)
    assert parse_expression("max(x1, exp(0), log(1))", 1).evaluate([0.5]) == pytest.approx(1.0)


def test_syntax_error_column():
    with pytest.raises(ExprSyntaxError) as info:
        parse_expression("x1 + ", 1)
    assert info.value.column == 6
    with pytest.raises(ExprSyntaxError) as info:
        parse_expression("x1 $ 2", 1)
    assert info.value.column == 4


def test_variable_beyond_dimension():
    with pytest.raises(ExprSyntaxError):
        parse_expression("x3", 2)


def test_domain_error_and_batch_nan():
    e = parse_expression("log(x1)", 1)
    with pytest.raises(ExprDomainError):
        e.evaluate([0.0])
    v = e.evaluate_batch(np.array([[1.0], [0.0], [-1.0]]), errors="nan")
    assert v[0] == 0.0 and np.isnan(v[1]) and np.isnan(v[2])


def test_gradient_exact():
    e = parse_expression("x1*x2^2", 2)
    assert np.allclose(e.gradient([1.0, 2.0]), [4.0, 4.0])
    assert np.allclose(e.gradient([1.0, 2.0], block=[1]), [4.0])


def test_gradient_batch_matches_pointwise():
    e = parse_expression("exp(0.3*x1)*x2 + sqrt(1 + x1^2)", 2)
    X = np.random.default_rng(0).normal(size=(20, 2))
    vals, grads, bad = e.gradient_batch(X)
    assert not bad.any()
    for x, v, g in zip(X, vals, grads):
        assert v == pytest.approx(e.evaluate(x))
        assert np.allclose(g, e.gradient(x))


def test_kink_warning():
    e = parse_expression("abs(x1)", 1)
    with pytest.warns(NonsmoothWarning):
        e.gradient([0.0])
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        e.gradient([0.5])


def test_is_smooth():
    assert parse_expression("x1^2 + exp(x1)", 1).is_smooth
    assert not parse_expression("abs(x1)", 1).is_smooth
    assert not parse_expression("0^max(x1, 0)", 1).is_smooth


def test_restrict():
    e = parse_expression("x1*x2 + x3", 3)
    r = e.restrict([0, 2], {1: 3.0})
    assert r.evaluate([2.0, 1.0]) == pytest.approx(7.0)


def test_print_round_trip_is_exact():
    rng = np.random.default_rng(1)
    for text in ("min(abs(x1) + abs(x2), 1) - x1/(1 + x2^2)", "-x1^2*exp(-x2) + sqrt(1 + x1^2)", "max(x1, -x2, 0.5)^3"):
        e = parse_expression(text, 2)
        e2 = parse_expression(to_text(parse_expression(to_text(e.root), 2).root), 2)
        P = rng.normal(size=(100, 2))
        assert np.array_equal(e.evaluate_batch(P), e2.evaluate_batch(P))


def test_evaluate_is_pure():
    e = parse_expression("exp(x1)*log(1 + x2^2) - x1/3", 2)
    x = np.array([0.3, -1.7])
    assert e.evaluate(x) == e.evaluate(x.copy())
    assert np.array_equal(e.gradient(x), e.gradient(x))


# property: analytic gradients against central differences

_ATOMS = ["x{i}", "x{i}^2", "exp(0.3*x{i})", "log(1 + x{i}^2)", "sqrt(2 + x{i}^2)", "x{i}/(1 + x{j}^2)", "x{i}*x{j}"]


def _random_smooth(rng, n):
    terms = []
    for _ in range(int(rng.integers(1, 5))):
        atom = _ATOMS[int(rng.integers(len(_ATOMS)))]
        i, j = rng.integers(1, n + 1, size=2)
        coef = rng.uniform(-2, 2)
        terms.append(f"({coef:.6g})*" + atom.format(i=i, j=j))
    if rng.random() < 0.3:
        terms = [f"({terms[0]})*({' + '.join(terms[1:]) or '1'})"]
    return " + ".join(terms)


def test_gradient_matches_finite_differences_1000_cases():
    rng = np.random.default_rng(12345)
    failures = 0
    for _ in range(1000):
        n = int(rng.integers(1, 5))
        e = parse_expression(_random_smooth(rng, n), n)
        x = rng.uniform(-2, 2, n)
        g = e.gradient(x)
        fd = fd_gradient(e, x)
        failures += bool(np.any(np.abs(g - fd) > 1e-5 * (1 + np.abs(g))))
    assert failures == 0
