"""Expression DSL for chart-dependent scalar coefficients.

Grammar (EBNF, also reproduced in the README):

    expression  = term { ("+" | "-") term } ;
    term        = unary { ("*" | "/") unary } ;
    unary       = "-" unary | power ;
    power       = atom [ "^" exponent ] ;
    exponent    = [ "-" ] integer { "^" [ "-" ] integer } ;   (* right-assoc *)
    atom        = number | variable | function "(" expression ")"
                | "(" expression ")" ;
    variable    = "x" integer ;                               (* 1-based *)
    function    = "sin" | "cos" | "exp" | "ln" | "sqrt" ;

Power binds tighter than unary minus, which binds tighter than "*" and "/",
which bind tighter than "+" and "-".  Exponents are integer literals, so
an exponent chain folds right-associatively into a single integer at parse
time.

Evaluation works over three scalar kinds through one tree walk: plain
floats, Jet values (exact truncated derivatives), and numpy arrays (used
for vectorised Monte Carlo; array evaluation skips domain checks and lets
non-finite values flow, callers mask them).
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .jets import Jet, JetDomainError

FUNCTIONS = ("sin", "cos", "exp", "ln", "sqrt")
_MAX_EXPONENT = 4096


class ExprError(ValueError):
    """Base class for expression failures."""


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


class ExprNameError(ExprError):
    def __init__(self, name: str, offset: int):
        super().__init__(f"unknown identifier '{name}' (offset {offset})")
        self.name = name
        self.offset = offset


class ExprIndexError(ExprError):
    def __init__(self, index: int, dim: int, offset: int):
        super().__init__(
            f"variable index {index} out of range 1..{dim} (offset {offset})"
        )
        self.index = index
        self.offset = offset


class ExprDomainError(ExprError):
    def __init__(self, message: str, node):
        super().__init__(f"{message} in '{print_node(node)}'")
        self.node = node


# -- AST nodes -------------------------------------------------------------


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    index: int  # 1-based


@dataclass(frozen=True)
class Add:
    lhs: object
    rhs: object


@dataclass(frozen=True)
class Sub:
    lhs: object
    rhs: object


@dataclass(frozen=True)
class Mul:
    lhs: object
    rhs: object


@dataclass(frozen=True)
class Div:
    lhs: object
    rhs: object


@dataclass(frozen=True)
class Pow:
    base: object
    exponent: int


@dataclass(frozen=True)
class Neg:
    operand: object


@dataclass(frozen=True)
class Call:
    fn: str
    arg: object


@dataclass(frozen=True)
class ExprAst:
    """A parsed expression plus the chart dimension it was declared over."""

    root: object
    dim: int

    def __str__(self):
        return print_node(self.root)


# -- tokenizer --------------------------------------------------------------

_NUM_RE = re.compile(r"\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?")
_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


def _tokenize(text: str):
    tokens = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if ch.isdigit() or ch == ".":
            m = _NUM_RE.match(text, i)
            if not m:
                raise ExprSyntaxError("malformed number", i)
            tokens.append(("NUM", m.group(), i))
            i = m.end()
            continue
        if ch.isalpha() or ch == "_":
            m = _IDENT_RE.match(text, i)
            tokens.append(("IDENT", m.group(), i))
            i = m.end()
            continue
        if ch in "+-*/^":
            tokens.append(("OP", ch, i))
            i += 1
            continue
        if ch == "(":
            tokens.append(("LPAREN", ch, i))
            i += 1
            continue
        if ch == ")":
            tokens.append(("RPAREN", ch, i))
            i += 1
            continue
        raise ExprSyntaxError(f"unexpected character '{ch}'", i)
    tokens.append(("END", "", n))
    return tokens


# -- parser -----------------------------------------------------------------


class _Parser:
    def __init__(self, tokens, dim):
        self.tokens = tokens
        self.pos = 0
        self.dim = dim

    def peek(self):
        return self.tokens[self.pos]

    def advance(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind, what):
        tok = self.advance()
        if tok[0] != kind:
            raise ExprSyntaxError(f"expected {what}", tok[2])
        return tok

    def parse(self):
        node = self.expression()
        tok = self.peek()
        if tok[0] != "END":
            raise ExprSyntaxError(f"unexpected token '{tok[1]}'", tok[2])
        return node

    def expression(self):
        node = self.term()
        while True:
            tok = self.peek()
            if tok[0] == "OP" and tok[1] in "+-":
                self.advance()
                rhs = self.term()
                node = Add(node, rhs) if tok[1] == "+" else Sub(node, rhs)
            else:
                return node

    def term(self):
        node = self.unary()
        while True:
            tok = self.peek()
            if tok[0] == "OP" and tok[1] in "*/":
                self.advance()
                rhs = self.unary()
                node = Mul(node, rhs) if tok[1] == "*" else Div(node, rhs)
            else:
                return node

    def unary(self):
        tok = self.peek()
        if tok[0] == "OP" and tok[1] == "-":
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[0] == "OP" and self.peek()[1] == "^":
            self.advance()
            return Pow(base, self.exponent_chain())
        return base

    def exponent_chain(self) -> int:
        exps = [self.signed_int()]
        while self.peek()[0] == "OP" and self.peek()[1] == "^":
            self.advance()
            exps.append(self.signed_int())
        acc = exps[-1]
        for e in reversed(exps[:-1]):
            if acc < 0:
                raise ExprSyntaxError(
                    "negative exponent inside an exponent chain", self.peek()[2]
                )
            acc = e**acc
            if abs(acc) > _MAX_EXPONENT:
                raise ExprSyntaxError("exponent too large", self.peek()[2])
        return acc

    def signed_int(self) -> int:
        sign = 1
        tok = self.peek()
        if tok[0] == "OP" and tok[1] == "-":
            self.advance()
            sign = -1
            tok = self.peek()
        if tok[0] != "NUM":
            raise ExprSyntaxError("expected integer exponent", tok[2])
        self.advance()
        if any(c in tok[1] for c in ".eE"):
            raise ExprSyntaxError("exponent must be an integer literal", tok[2])
        val = sign * int(tok[1])
        if abs(val) > _MAX_EXPONENT:
            raise ExprSyntaxError("exponent too large", tok[2])
        return val

    def atom(self):
        tok = self.advance()
        if tok[0] == "NUM":
            return Const(float(tok[1]))
        if tok[0] == "IDENT":
            name, off = tok[1], tok[2]
            m = re.fullmatch(r"x(\d+)", name)
            if m:
                index = int(m.group(1))
                if not 1 <= index <= self.dim:
                    raise ExprIndexError(index, self.dim, off)
                return Var(index)
            if name in FUNCTIONS:
                self.expect("LPAREN", f"'(' after {name}")
                arg = self.expression()
                self.expect("RPAREN", "')'")
                return Call(name, arg)
            raise ExprNameError(name, off)
        if tok[0] == "LPAREN":
            node = self.expression()
            self.expect("RPAREN", "')'")
            return node
        raise ExprSyntaxError(f"unexpected token '{tok[1] or 'end of input'}'", tok[2])


def parse_expr(text: str, dim: int) -> ExprAst:
    """Parse the DSL string into an AST declared over x1..x<dim>."""
    if dim < 1:
        raise ValueError("dimension must be at least 1")
    return ExprAst(_Parser(_tokenize(text), dim).parse(), dim)


# -- printer ----------------------------------------------------------------

_PREC = {Add: 1, Sub: 1, Mul: 2, Div: 2, Neg: 3, Pow: 4}


def _prec(node) -> int:
    if isinstance(node, Const) and node.value < 0:
        return 0  # force parens so the sign survives reparsing
    return _PREC.get(type(node), 9)


def print_node(node) -> str:
    if isinstance(node, Const):
        return repr(node.value)
    if isinstance(node, Var):
        return f"x{node.index}"
    if isinstance(node, Neg):
        inner = print_node(node.operand)
        if _prec(node.operand) < _PREC[Neg]:
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(node, Pow):
        base = print_node(node.base)
        # a Pow base also needs parens: "x^2^3" would reparse as a
        # folded exponent chain rather than a nested power
        if _prec(node.base) <= _PREC[Pow]:
            base = f"({base})"
        return f"{base}^{node.exponent}"
    if isinstance(node, Call):
        return f"{node.fn}({print_node(node.arg)})"
    if isinstance(node, (Add, Sub, Mul, Div)):
        op = {Add: "+", Sub: "-", Mul: "*", Div: "/"}[type(node)]
        prec = _PREC[type(node)]
        left = print_node(node.lhs)
        if _prec(node.lhs) < prec:
            left = f"({left})"
        right = print_node(node.rhs)
        # left-associative: equal precedence on the right needs parens
        if _prec(node.rhs) <= prec and isinstance(node.rhs, (Add, Sub, Mul, Div)):
            right = f"({right})"
        elif _prec(node.rhs) < prec:
            right = f"({right})"
        return f"{left} {op} {right}"
    raise TypeError(f"not an expression node: {node!r}")


def print_expr(ast: ExprAst) -> str:
    return print_node(ast.root)


def free_vars(ast: ExprAst) -> set[int]:
    out: set[int] = set()

    def walk(node):
        if isinstance(node, Var):
            out.add(node.index)
        elif isinstance(node, (Add, Sub, Mul, Div)):
            walk(node.lhs)
            walk(node.rhs)
        elif isinstance(node, Pow):
            walk(node.base)
        elif isinstance(node, Neg):
            walk(node.operand)
        elif isinstance(node, Call):
            walk(node.arg)

    walk(ast.root)
    return out


# -- evaluation --------------------------------------------------------------


def _call_float(fn, v, node):
    try:
        if fn == "sin":
            return math.sin(v)
        if fn == "cos":
            return math.cos(v)
        if fn == "exp":
            return math.exp(v)
        if fn == "ln":
            if v <= 0.0:
                raise ExprDomainError(f"ln of nonpositive value {v}", node)
            return math.log(v)
        if fn == "sqrt":
            if v < 0.0:
                raise ExprDomainError(f"sqrt of negative value {v}", node)
            return math.sqrt(v)
    except OverflowError:
        raise ExprDomainError("range overflow", node) from None
    raise ExprNameError(fn, 0)


_ARRAY_FUNCS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "ln": np.log,
    "sqrt": np.sqrt,
}


def _ev(node, env):
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Var):
        return env[node.index - 1]
    if isinstance(node, Neg):
        return -_ev(node.operand, env)
    if isinstance(node, Add):
        return _ev(node.lhs, env) + _ev(node.rhs, env)
    if isinstance(node, Sub):
        return _ev(node.lhs, env) - _ev(node.rhs, env)
    if isinstance(node, Mul):
        return _ev(node.lhs, env) * _ev(node.rhs, env)
    if isinstance(node, Div):
        num = _ev(node.lhs, env)
        den = _ev(node.rhs, env)
        if isinstance(den, np.ndarray):
            with np.errstate(divide="ignore", invalid="ignore"):
                return num / den
        try:
            return num / den
        except (ZeroDivisionError, JetDomainError):
            raise ExprDomainError("division by zero", node) from None
    if isinstance(node, Pow):
        base = _ev(node.base, env)
        if isinstance(base, np.ndarray):
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.power(base, float(node.exponent))
        try:
            return base**node.exponent
        except (ZeroDivisionError, JetDomainError):
            raise ExprDomainError("zero base with negative exponent", node) from None
    if isinstance(node, Call):
        v = _ev(node.arg, env)
        if isinstance(v, Jet):
            try:
                if node.fn == "ln":
                    return v.log()
                return getattr(v, node.fn)()
            except JetDomainError as exc:
                raise ExprDomainError(str(exc), node) from None
        if isinstance(v, np.ndarray):
            with np.errstate(divide="ignore", invalid="ignore"):
                return _ARRAY_FUNCS[node.fn](v)
        return _call_float(node.fn, v, node)
    raise TypeError(f"not an expression node: {node!r}")


def eval_expr(ast: ExprAst, env):
    """Evaluate over an environment of floats, jets, or numpy arrays.

    env[i] supplies the value for x(i+1).  Its length must equal the
    declared dimension.  Constant expressions return plain floats even
    under jet environments; callers that need a jet must lift the result.
    """
    if len(env) != ast.dim:
        raise ValueError(
            f"environment length {len(env)} does not match dimension {ast.dim}"
        )
    return _ev(ast.root, env)


# -- programmatic construction helpers ---------------------------------------


def e_const(v) -> Const:
    return Const(float(v))


def e_var(i: int) -> Var:
    return Var(i)


def e_add(a, b):
    return Add(a, b)


def e_sub(a, b):
    return Sub(a, b)


def e_mul(a, b):
    return Mul(a, b)


def e_div(a, b):
    return Div(a, b)


def e_neg(a):
    return Neg(a)


def e_pow(base, p: int):
    return Pow(base, int(p))


def e_call(fn: str, arg):
    if fn not in FUNCTIONS:
        raise ValueError(f"unknown function '{fn}'")
    return Call(fn, arg)


def as_ast(node, dim: int) -> ExprAst:
    return ExprAst(node, dim)
