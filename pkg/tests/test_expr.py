import math

import numpy as np
import pytest

from qdae import expr
from qdae.expr import (
    Binary, Const, Der, Param, Unary, Var,
    DomainError, ParseError, UnboundNameError, UnknownFunctionError,
    add, cos, der, differentiate, differentiate_time, div, evaluate, exp,
    free_names, mul, neg, parse_expression, pow_, sin, sub,
    substitute_derivatives, to_text, var,
)


def central_difference(f, x, h=1e-6):
    return (f(x + h) - f(x - h)) / (2 * h)


# --- parsing -----------------------------------------------------------------

def test_parse_smib_speed_rhs_structure():
    e = parse_expression("K1 - K2*sin(delta) - K3*w", parameters=["K1", "K2", "K3"])
    expected = sub(
        sub(Param("K1"), mul(Param("K2"), sin(Var("delta")))),
        mul(Param("K3"), Var("w")),
    )
    assert e == expected


def test_parse_single_token_variable():
    assert parse_expression("x") == Var("x")


def test_parse_exciter_saturation():
    e = parse_expression("0.0039*exp(1.555*Efd)")
    assert e == mul(Const(0.0039), exp(mul(Const(1.555), Var("Efd"))))


def test_parse_derivative_reference():
    assert parse_expression("der(x)") == Der("x", 1)
    assert parse_expression("der(der(x))") == Der("x", 2)


def test_parse_power_binds_tighter_than_mul():
    e = parse_expression("2*x^2")
    assert e == mul(Const(2.0), pow_(Var("x"), Const(2.0)))


def test_parse_unary_minus_folds_into_literal():
    assert parse_expression("-2.5") == Const(-2.5)
    assert parse_expression("-x") == neg(Var("x"))


def test_parse_error_carries_position():
    with pytest.raises(ParseError) as err:
        parse_expression("1 + * 2")
    assert err.value.line == 1
    assert err.value.column == 5


def test_unknown_function_rejected():
    with pytest.raises(UnknownFunctionError):
        parse_expression("tan(x)")


def test_unbalanced_parenthesis_rejected():
    with pytest.raises(ParseError):
        parse_expression("sin(x")


# --- evaluation --------------------------------------------------------------

def test_evaluate_smib_rhs_at_origin():
    e = parse_expression("K1 - K2*sin(delta)", parameters=["K1", "K2"])
    assert evaluate(e, {"K1": 5.0, "K2": 10.0, "delta": 0.0}) == 5.0


def test_evaluate_sine_at_zero():
    assert evaluate(sin(var("delta")), {"delta": 0.0}) == 0.0


def test_evaluate_saturation_at_zero_field():
    e = parse_expression("0.0039*exp(1.555*Efd)")
    assert evaluate(e, {"Efd": 0.0}) == pytest.approx(0.0039, abs=0.0)


def test_evaluate_unbound_name():
    with pytest.raises(UnboundNameError):
        evaluate(var("missing"), {})


def test_evaluate_division_by_zero_is_domain_error():
    e = parse_expression("1/x")
    with pytest.raises(DomainError):
        evaluate(e, {"x": 0.0})


def test_evaluate_derivative_reference_binding():
    e = substitute_derivatives(der("x"), {})  # left in place
    assert evaluate(e, {"der(x)": 3.0}) == 3.0


# --- differentiation ---------------------------------------------------------

def test_derivative_of_sine_is_cosine():
    assert differentiate(sin(var("delta")), "delta") == cos(var("delta"))


def test_derivative_of_linear_term_is_coefficient():
    e = parse_expression("K1 - K2*sin(delta) - K3*w", parameters=["K1", "K2", "K3"])
    assert differentiate(e, "w") == neg(Param("K3"))


def test_power_flow_style_angle_derivative():
    # C*sin(di - dj) + D*cos(di - dj) differentiated in di, checked against
    # a central finite difference at random points.
    e = parse_expression("C*sin(di - dj) + D*cos(di - dj)", parameters=["C", "D"])
    d = differentiate(e, "di")
    rng = np.random.default_rng(7)
    for _ in range(10):
        b = {"C": rng.uniform(-2, 2), "D": rng.uniform(-2, 2),
             "di": rng.uniform(-3, 3), "dj": rng.uniform(-3, 3)}

        def f(x, b=b):
            return evaluate(e, {**b, "di": x})

        assert evaluate(d, b) == pytest.approx(
            central_difference(f, b["di"]), abs=1e-6)


def test_time_derivative_linearity():
    e = parse_expression("x + y - 1")
    assert differentiate_time(e) == add(der("x"), der("y"))


def test_time_derivative_chain_rule():
    assert differentiate_time(sin(var("x"))) == mul(cos(var("x")), der("x"))


def test_time_derivative_product_rule():
    e = mul(var("x"), var("y"))
    assert differentiate_time(e) == add(
        mul(der("x"), var("y")), mul(var("x"), der("y")))


def test_parameters_have_zero_time_derivative():
    e = parse_expression("p*x", parameters=["p"])
    assert differentiate_time(e) == mul(Param("p"), der("x"))


def test_substitute_derivatives():
    e = differentiate_time(parse_expression("x - p", parameters=["p"]))
    assert substitute_derivatives(e, {"x": var("y")}) == var("y")


# --- random-expression properties ---------------------------------------------

_NAMES = ("x", "y", "w")


def _random_expression(rng, depth=0):
    """Expressions kept away from singular points: divisions use 2 + u^2."""
    choices = ["var", "const", "add", "sub", "mul", "sin", "cos", "exp", "div", "pow"]
    if depth >= 4:
        choices = ["var", "const"]
    kind = rng.choice(choices)
    if kind == "var":
        return var(str(rng.choice(_NAMES)))
    if kind == "const":
        return Const(round(float(rng.uniform(-2, 2)), 3))
    if kind in ("add", "sub", "mul"):
        ctor = {"add": add, "sub": sub, "mul": mul}[kind]
        return ctor(_random_expression(rng, depth + 1), _random_expression(rng, depth + 1))
    if kind in ("sin", "cos"):
        ctor = {"sin": sin, "cos": cos}[kind]
        return ctor(_random_expression(rng, depth + 1))
    if kind == "exp":
        return exp(mul(Const(0.25), _random_expression(rng, depth + 1)))
    if kind == "div":
        denom = add(Const(2.0), mul(var(str(rng.choice(_NAMES))), var(str(rng.choice(_NAMES)))))
        return div(_random_expression(rng, depth + 1), denom)
    return pow_(add(Const(2.0), sin(_random_expression(rng, depth + 1))),
                Const(float(rng.integers(2, 4))))


def test_print_parse_round_trip_on_random_trees():
    rng = np.random.default_rng(11)
    for _ in range(200):
        e = _random_expression(rng)
        assert parse_expression(to_text(e)) == e


def test_symbolic_derivative_matches_finite_difference():
    rng = np.random.default_rng(23)
    checked = 0
    while checked < 100:
        e = _random_expression(rng)
        if "x" not in free_names(e):
            continue
        d = differentiate(e, "x")
        b = {name: float(rng.uniform(0.4, 1.2)) for name in _NAMES}

        def f(x, b=b, e=e):
            return evaluate(e, {**b, "x": x})

        exact = evaluate(d, b)
        approx = central_difference(f, b["x"])
        scale = max(1.0, abs(exact), abs(approx))
        assert abs(exact - approx) <= 1e-4 * scale
        checked += 1


def test_differentiation_is_linear():
    rng = np.random.default_rng(31)
    for _ in range(50):
        e1 = _random_expression(rng)
        e2 = _random_expression(rng)
        a = Const(float(rng.uniform(-2, 2)))
        combo = differentiate(add(mul(a, e1), e2), "x")
        parts = add(mul(a, differentiate(e1, "x")), differentiate(e2, "x"))
        b = {name: float(rng.uniform(0.4, 1.2)) for name in _NAMES}
        assert evaluate(combo, b) == pytest.approx(evaluate(parts, b), abs=1e-12, rel=1e-12)


def test_compiled_vector_matches_interpreter():
    rng = np.random.default_rng(43)
    exprs = [_random_expression(rng) for _ in range(20)]
    f = expr.compile_vector(exprs, _NAMES)
    for _ in range(20):
        z = rng.uniform(0.4, 1.2, size=len(_NAMES))
        b = dict(zip(_NAMES, z))
        expected = [evaluate(e, b) for e in exprs]
        assert f(z) == pytest.approx(expected, abs=0.0)


def test_pow_requires_constant_exponent():
    with pytest.raises(ValueError):
        pow_(var("x"), var("y"))


def test_derivative_reference_order_validation():
    with pytest.raises(ValueError):
        Der("x", 0)
