"""Symbolic expression trees for dynamic-model right-hand sides.

The vocabulary is deliberately small: real constants, parameter and variable
references, time-derivative references, unary neg/sin/cos/exp, and binary
add/sub/mul/div/pow with a constant exponent.  Construction goes through the
helper functions (:func:`add`, :func:`mul`, ...) which fold constants and drop
zero/one identities; no other simplification is performed, so correctness is
checked at the value level, not the form level.

Nodes are frozen dataclasses: immutable after construction and safe to share
between threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping

__all__ = [
    "Expression", "Const", "Param", "Var", "Der", "Unary", "Binary",
    "ExprError", "ParseError", "UnknownFunctionError", "UnboundNameError",
    "DomainError",
    "const", "param", "var", "der", "neg", "sin", "cos", "exp",
    "add", "sub", "mul", "div", "pow_",
    "parse_expression", "to_text", "evaluate", "differentiate",
    "differentiate_time", "substitute_derivatives", "free_names",
    "derivative_names", "compile_vector",
]


class ExprError(Exception):
    """Base class for expression-level failures."""


class ParseError(ExprError):
    """Syntax error with 1-based line/column position."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class UnknownFunctionError(ParseError):
    """A call to a function outside sin/cos/exp/der."""


class UnboundNameError(ExprError):
    """Evaluation hit a name with no binding."""


class DomainError(ExprError):
    """Evaluation left the real domain (division by zero)."""


@dataclass(frozen=True)
class Expression:
    """Base node.  Python operators build folded trees for convenience."""


    def __add__(self, other):
        return add(self, _coerce(other))

    def __radd__(self, other):
        return add(_coerce(other), self)

    def __sub__(self, other):
        return sub(self, _coerce(other))

    def __rsub__(self, other):
        return sub(_coerce(other), self)

    def __mul__(self, other):
        return mul(self, _coerce(other))

    def __rmul__(self, other):
        return mul(_coerce(other), self)

    def __truediv__(self, other):
        return div(self, _coerce(other))

    def __rtruediv__(self, other):
        return div(_coerce(other), self)

    def __pow__(self, other):
        return pow_(self, _coerce(other))

    def __neg__(self):
        return neg(self)

    def __str__(self):
        return to_text(self)


@dataclass(frozen=True)
class Const(Expression):
    value: float



@dataclass(frozen=True)
class Param(Expression):
    name: str



@dataclass(frozen=True)
class Var(Expression):
    name: str



@dataclass(frozen=True)
class Der(Expression):
    """Time-derivative reference der(name), order >= 1."""

    name: str
    order: int = 1


    def __post_init__(self):
        if self.order < 1:
            raise ValueError("derivative order must be >= 1")


@dataclass(frozen=True)
class Unary(Expression):
    op: str  # neg | sin | cos | exp
    arg: Expression



@dataclass(frozen=True)
class Binary(Expression):
    op: str  # add | sub | mul | div | pow
    lhs: Expression
    rhs: Expression



_ZERO = Const(0.0)
_ONE = Const(1.0)


def _coerce(value) -> Expression:
    if isinstance(value, Expression):
        return value
    return Const(float(value))


def const(value: float) -> Const:
    return Const(float(value))


def param(name: str) -> Param:
    return Param(name)


def var(name: str) -> Var:
    return Var(name)


def der(name: str, order: int = 1) -> Der:
    return Der(name, order)


def _is_const(e: Expression, value: float | None = None) -> bool:
    if not isinstance(e, Const):
        return False
    return value is None or e.value == value


def neg(e: Expression) -> Expression:
    if isinstance(e, Const):
        return Const(-e.value)
    return Unary("neg", e)


def sin(e: Expression) -> Expression:
    if isinstance(e, Const):
        return Const(math.sin(e.value))
    return Unary("sin", e)


def cos(e: Expression) -> Expression:
    if isinstance(e, Const):
        return Const(math.cos(e.value))
    return Unary("cos", e)


def exp(e: Expression) -> Expression:
    if isinstance(e, Const):
        return Const(math.exp(e.value))
    return Unary("exp", e)


def add(a: Expression, b: Expression) -> Expression:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    return Binary("add", a, b)


def sub(a: Expression, b: Expression) -> Expression:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return neg(b)
    return Binary("sub", a, b)


def mul(a: Expression, b: Expression) -> Expression:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return _ZERO
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    return Binary("mul", a, b)


def div(a: Expression, b: Expression) -> Expression:
    if _is_const(b, 1.0):
        return a
    if _is_const(a, 0.0) and not _is_const(b, 0.0):
        return _ZERO
    if isinstance(a, Const) and isinstance(b, Const) and b.value != 0.0:
        return Const(a.value / b.value)
    return Binary("div", a, b)


def pow_(a: Expression, b: Expression | float) -> Expression:
    b = _coerce(b)
    if not isinstance(b, Const):
        raise ValueError("pow exponent must be a constant")
    if b.value == 1.0:
        return a
    if b.value == 0.0:
        return _ONE
    if isinstance(a, Const):
        return Const(a.value ** b.value)
    return Binary("pow", a, b)


# --- parsing -----------------------------------------------------------------

_FUNCTIONS = {"sin": sin, "cos": cos, "exp": exp}


class _Scanner:
    """Hand-rolled tokenizer tracking line/column for error reporting."""

    def __init__(self, text: str, line_offset: int = 1):
        self.text = text
        self.pos = 0
        self.line = line_offset
        self.col = 1

    def error(self, message: str) -> ParseError:
        return ParseError(message, self.line, self.col)

    def _advance(self, count: int):
        for ch in self.text[self.pos:self.pos + count]:
            if ch == "\n":
                self.line += 1
                self.col = 1
            else:
                self.col += 1
        self.pos += count

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos] in " \t\r\n":
            self._advance(1)

    def peek(self) -> str:
        self.skip_ws()
        if self.pos >= len(self.text):
            return ""
        return self.text[self.pos]

    def take(self) -> str:
        ch = self.peek()
        if ch:
            self._advance(1)
        return ch

    def expect(self, ch: str):
        got = self.peek()
        if got != ch:
            shown = got if got else "end of input"
            raise self.error(f"expected '{ch}', found {shown!r}")
        self._advance(1)

    def number(self) -> float:
        self.skip_ws()
        start = self.pos
        text = self.text
        i = self.pos
        while i < len(text) and text[i].isdigit():
            i += 1
        if i < len(text) and text[i] == ".":
            i += 1
            while i < len(text) and text[i].isdigit():
                i += 1
        if i == start or text[start:i] == ".":
            raise self.error("expected a number")
        if i < len(text) and text[i] in "eE":
            j = i + 1
            if j < len(text) and text[j] in "+-":
                j += 1
            k = j
            while k < len(text) and text[k].isdigit():
                k += 1
            if k > j:
                i = k
        token = text[start:i]
        self._advance(i - start)
        return float(token)

    def ident(self) -> str:
        self.skip_ws()
        start = self.pos
        text = self.text
        i = self.pos
        while i < len(text) and (text[i].isalnum() or text[i] == "_"):
            i += 1
        if i == start or text[start].isdigit():
            raise self.error("expected an identifier")
        token = text[start:i]
        self._advance(i - start)
        return token


class _Parser:
    """Recursive descent over
    expr := term (('+'|'-') term)*
    term := factor (('*'|'/') factor)*
    factor := base ('^' ['-'] number)?
    base := number | ident | ident '(' expr ')' | '(' expr ')' | '-' base

    The optional '-' on the exponent is a superset of the documented grammar
    so that printed derivatives (fractional negative powers) round-trip.
    """

    def __init__(self, scanner: _Scanner, parameters: frozenset[str]):
        self.s = scanner
        self.parameters = parameters

    def parse(self) -> Expression:
        e = self.expr()
        if self.s.peek():
            raise self.s.error(f"unexpected trailing input {self.s.peek()!r}")
        return e

    def expr(self) -> Expression:
        e = self.term()
        while True:
            ch = self.s.peek()
            if ch == "+":
                self.s.take()
                e = add(e, self.term())
            elif ch == "-":
                self.s.take()
                e = sub(e, self.term())
            else:
                return e

    def term(self) -> Expression:
        e = self.factor()
        while True:
            ch = self.s.peek()
            if ch == "*":
                self.s.take()
                e = mul(e, self.factor())
            elif ch == "/":
                self.s.take()
                e = div(e, self.factor())
            else:
                return e

    def factor(self) -> Expression:
        e = self.base()
        if self.s.peek() == "^":
            self.s.take()
            sign = 1.0
            if self.s.peek() == "-":
                self.s.take()
                sign = -1.0
            e = pow_(e, Const(sign * self.s.number()))
        return e

    def base(self) -> Expression:
        ch = self.s.peek()
        if ch == "":
            raise self.s.error("unexpected end of input")
        if ch == "-":
            self.s.take()
            return neg(self.base())
        if ch == "(":
            self.s.take()
            e = self.expr()
            self.s.expect(")")
            return e
        if ch.isdigit() or ch == ".":
            return Const(self.s.number())
        name = self.s.ident()
        if self.s.peek() == "(":
            line, col = self.s.line, self.s.col
            self.s.take()
            arg = self.expr()
            self.s.expect(")")
            if name == "der":
                return self._derivative_ref(arg, line, col)
            fn = _FUNCTIONS.get(name)
            if fn is None:
                raise UnknownFunctionError(f"unknown function '{name}'", line, col)
            return fn(arg)
        if name in self.parameters:
            return Param(name)
        return Var(name)

    def _derivative_ref(self, arg: Expression, line: int, col: int) -> Der:
        if isinstance(arg, Var):
            return Der(arg.name, 1)
        if isinstance(arg, Der):
            return Der(arg.name, arg.order + 1)
        raise ParseError("der(...) takes a variable name", line, col)


def parse_expression(text: str, parameters: Iterable[str] = (),
                     line_offset: int = 1) -> Expression:
    """Parse model-equation text into an expression tree.

    Identifiers listed in ``parameters`` become parameter references; all
    other identifiers become variable references.  ``der(x)`` is reserved for
    derivative references.  Raises :class:`ParseError` with line/column on
    malformed input.
    """
    return _Parser(_Scanner(text, line_offset), frozenset(parameters)).parse()


# --- printing ----------------------------------------------------------------

def _fmt_const(value: float) -> str:
    return repr(value) if value == value else "nan"


def to_text(e: Expression) -> str:
    """Render an expression so that parsing the result rebuilds the same tree."""
    return _print_expr(e)


def _print_expr(e: Expression) -> str:
    if isinstance(e, Binary) and e.op in ("add", "sub"):
        op = "+" if e.op == "add" else "-"
        return f"{_print_expr(e.lhs)} {op} {_print_term(e.rhs)}"
    return _print_term(e)


def _print_term(e: Expression) -> str:
    if isinstance(e, Binary) and e.op in ("mul", "div"):
        op = "*" if e.op == "mul" else "/"
        return f"{_print_term(e.lhs)}{op}{_print_factor(e.rhs)}"
    return _print_factor(e)


def _print_factor(e: Expression) -> str:
    if isinstance(e, Binary) and e.op == "pow":
        return f"{_print_base(e.lhs)}^{_fmt_const(e.rhs.value)}"
    return _print_base(e)


def _print_base(e: Expression) -> str:
    if isinstance(e, Const):
        # Negative literals print through neg() so they re-fold on parse.
        return _fmt_const(e.value) if e.value >= 0 else f"-{_fmt_const(-e.value)}"
    if isinstance(e, (Param, Var)):
        return e.name
    if isinstance(e, Der):
        inner = e.name
        for _ in range(e.order):
            inner = f"der({inner})"
        return inner
    if isinstance(e, Unary):
        if e.op == "neg":
            return f"-{_print_base(e.arg)}"
        return f"{e.op}({_print_expr(e.arg)})"
    return f"({_print_expr(e)})"


# --- evaluation --------------------------------------------------------------

Bindings = Mapping[str, float]


def _binding_key(e: Expression) -> str:
    if isinstance(e, Der):
        key = e.name
        for _ in range(e.order):
            key = f"der({key})"
        return key
    return e.name


def evaluate(e: Expression, bindings: Bindings) -> float:
    """Evaluate in IEEE double precision with deterministic association.

    Raises :class:`UnboundNameError` for missing names and
    :class:`DomainError` on division by zero.
    """
    if isinstance(e, Const):
        return e.value
    if isinstance(e, (Param, Var, Der)):
        key = _binding_key(e)
        try:
            return float(bindings[key])
        except KeyError:
            raise UnboundNameError(f"no binding for '{key}'") from None
    if isinstance(e, Unary):
        x = evaluate(e.arg, bindings)
        if e.op == "neg":
            return -x
        if e.op == "sin":
            return math.sin(x)
        if e.op == "cos":
            return math.cos(x)
        return math.exp(x)
    assert isinstance(e, Binary)
    a = evaluate(e.lhs, bindings)
    b = evaluate(e.rhs, bindings)
    if e.op == "add":
        return a + b
    if e.op == "sub":
        return a - b
    if e.op == "mul":
        return a * b
    if e.op == "div":
        if b == 0.0:
            raise DomainError("division by zero")
        return a / b
    return a ** b


# --- differentiation ---------------------------------------------------------

def differentiate(e: Expression, name: str) -> Expression:
    """Exact symbolic partial derivative with respect to variable ``name``."""
    if isinstance(e, (Const, Param, Der)):
        return _ZERO
    if isinstance(e, Var):
        return _ONE if e.name == name else _ZERO
    if isinstance(e, Unary):
        d = differentiate(e.arg, name)
        return _chain(e, d)
    assert isinstance(e, Binary)
    da = differentiate(e.lhs, name)
    db = differentiate(e.rhs, name)
    return _binary_rule(e, da, db)


def differentiate_time(e: Expression) -> Expression:
    """Total time derivative: variables become derivative references."""
    if isinstance(e, (Const, Param)):
        return _ZERO
    if isinstance(e, Var):
        return Der(e.name, 1)
    if isinstance(e, Der):
        return Der(e.name, e.order + 1)
    if isinstance(e, Unary):
        return _chain(e, differentiate_time(e.arg))
    assert isinstance(e, Binary)
    return _binary_rule(e, differentiate_time(e.lhs), differentiate_time(e.rhs))


def _chain(e: Unary, d: Expression) -> Expression:
    if e.op == "neg":
        return neg(d)
    if e.op == "sin":
        return mul(cos(e.arg), d)
    if e.op == "cos":
        return neg(mul(sin(e.arg), d))
    return mul(exp(e.arg), d)


def _binary_rule(e: Binary, da: Expression, db: Expression) -> Expression:
    if e.op == "add":
        return add(da, db)
    if e.op == "sub":
        return sub(da, db)
    if e.op == "mul":
        return add(mul(da, e.rhs), mul(e.lhs, db))
    if e.op == "div":
        return div(sub(mul(da, e.rhs), mul(e.lhs, db)), mul(e.rhs, e.rhs))
    # pow with constant exponent: d(u^c) = c*u^(c-1)*du
    c = e.rhs.value
    return mul(mul(Const(c), pow_(e.lhs, Const(c - 1.0))), da)


def substitute_derivatives(e: Expression,
                           replacements: Mapping[str, Expression]) -> Expression:
    """Replace first-order derivative references by the given expressions.

    Higher-order references and references outside ``replacements`` are left
    in place (callers detect leftovers via :func:`derivative_names`).
    """
    if isinstance(e, Der) and e.order == 1 and e.name in replacements:
        return replacements[e.name]
    if isinstance(e, Unary):
        arg = substitute_derivatives(e.arg, replacements)
        return _FUNCTIONS[e.op](arg) if e.op in _FUNCTIONS else neg(arg)
    if isinstance(e, Binary):
        lhs = substitute_derivatives(e.lhs, replacements)
        rhs = substitute_derivatives(e.rhs, replacements)
        builder = {"add": add, "sub": sub, "mul": mul, "div": div, "pow": pow_}[e.op]
        return builder(lhs, rhs)
    return e


def free_names(e: Expression) -> set[str]:
    """Variable and parameter names occurring in the tree (derivative refs excluded)."""
    out: set[str] = set()
    _collect(e, out, None)
    return out


def derivative_names(e: Expression) -> set[str]:
    """Names occurring under a derivative reference of any order."""
    out: set[str] = set()
    _collect(e, None, out)
    return out


def _collect(e: Expression, names: set[str] | None, ders: set[str] | None):
    if isinstance(e, (Param, Var)):
        if names is not None:
            names.add(e.name)
    elif isinstance(e, Der):
        if ders is not None:
            ders.add(e.name)
    elif isinstance(e, Unary):
        _collect(e.arg, names, ders)
    elif isinstance(e, Binary):
        _collect(e.lhs, names, ders)
        _collect(e.rhs, names, ders)


# --- compilation -------------------------------------------------------------

def _codegen(e: Expression, slots: Mapping[str, str]) -> str:
    if isinstance(e, Const):
        return repr(e.value)
    if isinstance(e, (Param, Var, Der)):
        key = _binding_key(e)
        try:
            return slots[key]
        except KeyError:
            raise UnboundNameError(f"no compilation slot for '{key}'") from None
    if isinstance(e, Unary):
        arg = _codegen(e.arg, slots)
        if e.op == "neg":
            return f"(-{arg})"
        return f"_{e.op}({arg})"
    assert isinstance(e, Binary)
    a = _codegen(e.lhs, slots)
    b = _codegen(e.rhs, slots)
    sym = {"add": "+", "sub": "-", "mul": "*", "div": "/", "pow": "**"}[e.op]
    return f"({a}{sym}{b})"


def compile_vector(exprs: Iterable[Expression], variables: Iterable[str],
                   parameters: Bindings | None = None) -> Callable:
    """Compile expressions into one function ``f(values) -> ndarray``.

    ``values`` supplies the variables in the given order; parameter values are
    baked in as literals.  Used in integration hot loops where the interpreted
    :func:`evaluate` would dominate the run time.  The generated code mirrors
    the tree structure, so evaluation order matches :func:`evaluate`; division
    by zero surfaces as ZeroDivisionError here.
    """
    import numpy as np

    parameters = parameters or {}
    slots = {name: f"z[{i}]" for i, name in enumerate(variables)}
    for name, value in parameters.items():
        if name not in slots:
            slots[name] = repr(float(value))
    body = ", ".join(_codegen(e, slots) for e in exprs)
    source = f"def _compiled(z):\n    return _array(({body},))\n"
    namespace = {
        "_sin": math.sin, "_cos": math.cos, "_exp": math.exp,
        "_array": np.array,
    }
    exec(compile(source, "<qdae-expr>", "exec"), namespace)
    return namespace["_compiled"]
