"""Expression engine: parsing, exact derivatives, compilation."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as hst

from immersion_forge import expr as ex

COORDS = ("u1", "u2")

# corpus of 20 expressions, all smooth on [-1.4, 1.4]^2
CORPUS = [
    "u1^2 + 3*u1 - 5",
    "sin(u1)*cos(u2)",
    "sinh(u1) + cosh(u2)",
    "exp(u1*u2)",
    "log(2 + u1^2)",
    "sqrt(1 + u1^2 + u2^2)",
    "tan(u1)",
    "tanh(u1*u2)",
    "1/(2 + sin(u1))",
    "u1^3*u2 - u2^2/(1 + u1^2)",
    "cos(u1)^2 - sin(u1)^2",
    "exp(-u1^2/2)",
    "(u1 + u2)^4",
    "sin(cos(u1 + u2^2))",
    "log(cosh(u1))",
    "sqrt(2 + cos(u1))*sinh(u2)",
    "u1/(u2^2 + 1) + u2/(u1^2 + 1)",
    "-u1^2 + pi*u2",
    "cosh(u1)*cosh(u2) - sinh(u1)*sinh(u2)",
    "exp(sin(u1))/(3 + cos(u2))",
]


def _random_points(count, rng, lo=-1.4, hi=1.4):
    return [(rng.uniform(lo, hi), rng.uniform(lo, hi)) for _ in range(count)]


@pytest.mark.parametrize("text", CORPUS)
def test_derivative_matches_finite_differences(text, rng):
    e = ex.parse(text, COORDS)
    grads = [ex.diff(e, c) for c in COORDS]
    h = 1e-5
    for point in _random_points(100, rng):
        env = dict(zip(COORDS, point))
        for axis, c in enumerate(COORDS):
            exact = ex.evaluate(grads[axis], env)
            env_p = dict(env)
            env_m = dict(env)
            env_p[c] = point[axis] + h
            env_m[c] = point[axis] - h
            fd = (ex.evaluate(e, env_p) - ex.evaluate(e, env_m)) / (2 * h)
            assert abs(fd - exact) / max(1.0, abs(exact)) < 1e-6


@pytest.mark.parametrize("text", CORPUS)
def test_compiled_matches_tree_evaluation(text, rng):
    e = ex.parse(text, COORDS)
    d1 = ex.diff(e, "u1")
    fn = ex.compile_exprs([e, d1], COORDS)
    for point in _random_points(25, rng):
        env = dict(zip(COORDS, point))
        vals = fn(point)
        assert vals[0] == pytest.approx(ex.evaluate(e, env), rel=1e-14)
        assert vals[1] == pytest.approx(ex.evaluate(d1, env), rel=1e-14)


@pytest.mark.parametrize("text", CORPUS)
def test_print_parse_roundtrip_is_identity(text):
    e = ex.parse(text, COORDS)
    assert ex.parse(ex.to_str(e), COORDS) is e


@pytest.mark.parametrize("text", CORPUS)
def test_second_derivatives_commute(text, rng):
    e = ex.parse(text, COORDS)
    d12 = ex.diff(ex.diff(e, "u1"), "u2")
    d21 = ex.diff(ex.diff(e, "u2"), "u1")
    for point in _random_points(20, rng):
        env = dict(zip(COORDS, point))
        a = ex.evaluate(d12, env)
        b = ex.evaluate(d21, env)
        assert a == pytest.approx(b, rel=1e-12, abs=1e-12)


def test_unary_minus_binds_looser_than_power():
    e = ex.parse("-u1^2", ("u1",))
    assert ex.evaluate(e, {"u1": 2.0}) == -4.0


def test_hash_consing_interns_equal_trees():
    a = ex.parse("sin(u1) + u1*u2", COORDS)
    b = ex.parse("sin(u1) + u1*u2", COORDS)
    assert a is b


def test_constant_folding():
    e = ex.parse("2*3 + u1*0 + 0*sin(u1)", ("u1",))
    assert e.kind == "const" and e.value == 6.0


@pytest.mark.parametrize("text,value", [
    ("log(u1)", -1.0),
    ("sqrt(u1)", -1.0),
    ("1/u1", 0.0),
    ("u1^-1", 0.0),
])
def test_domain_errors(text, value):
    e = ex.parse(text, ("u1",))
    with pytest.raises(ex.DomainError):
        ex.evaluate(e, {"u1": value})
    fn = ex.compile_exprs([e], ("u1",))
    with pytest.raises(ex.DomainError):
        fn((value,))


@pytest.mark.parametrize("text,offset", [
    ("1+", 2),
    ("sin(", 4),
    ("foo(u1)", 0),
    ("u1 + u9", 5),
    ("(u1", 3),
])
def test_parse_errors_carry_byte_offsets(text, offset):
    with pytest.raises(ex.ParseError) as err:
        ex.parse(text, ("u1", "u2"))
    assert err.value.offset == offset


def test_nonconstant_exponent_rejected():
    with pytest.raises(ex.ParseError):
        ex.parse("u1^u2", COORDS)


def test_named_constants():
    assert ex.evaluate(ex.parse("pi", ()), {}) == pytest.approx(math.pi)
    assert ex.evaluate(ex.parse("e^2", ()), {}) == pytest.approx(math.e ** 2)


def test_derivative_of_constant_is_zero():
    e = ex.parse("pi*e + 4", ())
    assert ex.diff(e, "u1") is ex.ZERO


@settings(max_examples=60, deadline=None)
@given(hst.floats(-1.3, 1.3), hst.floats(-1.3, 1.3),
       hst.integers(0, len(CORPUS) - 1))
def test_evaluation_deterministic_and_finite(x, y, idx):
    e = ex.parse(CORPUS[idx], COORDS)
    env = {"u1": x, "u2": y}
    v1 = ex.evaluate(e, env)
    v2 = ex.evaluate(e, env)
    assert v1 == v2
    assert math.isfinite(v1)


@settings(max_examples=40, deadline=None)
@given(hst.floats(-1.0, 1.0), hst.floats(-1.0, 1.0))
def test_sum_rule(x, y):
    a = ex.parse("sin(u1)*u2", COORDS)
    b = ex.parse("cosh(u1) - u2^3", COORDS)
    lhs = ex.diff(ex.add(a, b), "u1")
    rhs = ex.add(ex.diff(a, "u1"), ex.diff(b, "u1"))
    env = {"u1": x, "u2": y}
    assert ex.evaluate(lhs, env) == pytest.approx(ex.evaluate(rhs, env),
                                                  rel=1e-12, abs=1e-12)
