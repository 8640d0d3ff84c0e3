"""Parser and evaluator for the scalar expression language.

All scalar formulas enter the toolkit as text in a small deterministic
math language: Hamiltonians, operator entries, chart transition components,
eigenvalue formulas.  The language has

* numbers (decimal, optional exponent), the constant ``pi``,
* named variables and named parameters (disjoint sets, fixed at parse time),
* ``+ - * / ^`` with the usual precedence, ``^`` right-associative and
  binding tighter than unary minus,
* calls ``sqrt, cbrt, sin, cos, tan, exp, log, abs, atan, pow``.

``^`` (and two-argument ``pow``) demand an integer exponent or a strictly
positive base, so every expression evaluates to a real number on its
domain; fractional powers of possibly-negative quantities must be written
through ``cbrt`` (e.g. ``cbrt(y^2)`` for y^(2/3)).

Parsing is deterministic and evaluation is a pure function of the bound
values, so ``Expr`` objects are immutable and safe to share.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .jets import (
    Jet2,
    JetDomainError,
    apply_function,
    constant,
    general_pow,
    int_pow,
)

__all__ = ["Expr", "ExprError", "parse", "FUNCTIONS"]

FUNCTIONS = {
    "sqrt": 1,
    "cbrt": 1,
    "sin": 1,
    "cos": 1,
    "tan": 1,
    "exp": 1,
    "log": 1,
    "abs": 1,
    "atan": 1,
    "pow": 2,
}

_CONSTANTS = {"pi": math.pi}


class ExprError(ValueError):
    """Parse or evaluation error, carrying the byte offset when known."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at offset {offset})"
        super().__init__(message)
        self.offset = offset


# --- AST -----------------------------------------------------------------


@dataclass(frozen=True)
class Node:
    pass


@dataclass(frozen=True)
class Num(Node):
    value: float


@dataclass(frozen=True)
class Var(Node):
    name: str


@dataclass(frozen=True)
class Param(Node):
    name: str


@dataclass(frozen=True)
class Neg(Node):
    child: Node


@dataclass(frozen=True)
class Bin(Node):
    op: str  # one of + - * / ^
    left: Node
    right: Node


@dataclass(frozen=True)
class Call(Node):
    fn: str
    args: tuple[Node, ...]


# --- tokenizer -----------------------------------------------------------

_OPS = set("+-*/^(),")


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    """Return (kind, text, offset) tokens; kinds: num, ident, op."""
    tokens = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
            continue
        if c.isdigit() or (c == "." and i + 1 < n and text[i + 1].isdigit()):
            j = i
            while j < n and (text[j].isdigit() or text[j] == "."):
                j += 1
            if j < n and text[j] in "eE":
                k = j + 1
                if k < n and text[k] in "+-":
                    k += 1
                if k < n and text[k].isdigit():
                    j = k
                    while j < n and text[j].isdigit():
                        j += 1
            tokens.append(("num", text[i:j], i))
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(("ident", text[i:j], i))
            i = j
            continue
        if c in _OPS:
            tokens.append(("op", c, i))
            i += 1
            continue
        raise ExprError(f"unexpected character {c!r}", i)
    return tokens


# --- parser (recursive descent) -------------------------------------------


class _Parser:
    def __init__(self, text: str, variables: frozenset[str], params: frozenset[str]):
        self.text = text
        self.tokens = _tokenize(text)
        self.pos = 0
        self.variables = variables
        self.params = params

    def peek(self):
        if self.pos < len(self.tokens):
            return self.tokens[self.pos]
        return ("eof", "", len(self.text))

    def next(self):
        tok = self.peek()
        self.pos += 1
        return tok

    def expect_op(self, op: str):
        kind, text, off = self.next()
        if kind != "op" or text != op:
            raise ExprError(f"expected {op!r}, found {text!r}", off)

    def parse(self) -> Node:
        node = self.expr()
        kind, text, off = self.peek()
        if kind != "eof":
            raise ExprError(f"unexpected token {text!r}", off)
        return node

    def expr(self) -> Node:
        node = self.term()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "+-":
                self.next()
                node = Bin(text, node, self.term())
            else:
                return node

    def term(self) -> Node:
        node = self.unary()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "*/":
                self.next()
                node = Bin(text, node, self.unary())
            else:
                return node

    def unary(self) -> Node:
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.next()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Node:
        node = self.base()
        kind, text, _ = self.peek()
        if kind == "op" and text == "^":
            self.next()
            # right-associative; exponent may carry a unary minus
            return Bin("^", node, self.unary())
        return node

    def base(self) -> Node:
        kind, text, off = self.next()
        if kind == "num":
            return Num(float(text))
        if kind == "ident":
            k2, t2, _ = self.peek()
            if k2 == "op" and t2 == "(":
                if text not in FUNCTIONS:
                    raise ExprError(f"unknown function {text!r}", off)
                self.next()
                args = [self.expr()]
                while True:
                    k3, t3, off3 = self.peek()
                    if k3 == "op" and t3 == ",":
                        self.next()
                        args.append(self.expr())
                    elif k3 == "op" and t3 == ")":
                        self.next()
                        break
                    else:
                        raise ExprError(f"expected ',' or ')', found {t3!r}", off3)
                if len(args) != FUNCTIONS[text]:
                    raise ExprError(
                        f"{text} takes {FUNCTIONS[text]} argument(s), got {len(args)}",
                        off,
                    )
                return Call(text, tuple(args))
            if text in self.variables:
                return Var(text)
            if text in self.params:
                return Param(text)
            if text in _CONSTANTS:
                return Num(_CONSTANTS[text])
            raise ExprError(f"unknown identifier {text!r}", off)
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        if kind == "op" and text == "-":
            return Neg(self.base())
        raise ExprError(f"unexpected token {text!r}", off)


# --- printing --------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}


def _to_str(node: Node, parent_prec: int = 0, right_side: bool = False) -> str:
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, (Var, Param)):
        return node.name
    if isinstance(node, Call):
        return f"{node.fn}({', '.join(_to_str(a) for a in node.args)})"
    if isinstance(node, Neg):
        inner = _to_str(node.child, _PREC["neg"])
        s = f"-{inner}"
        return f"({s})" if parent_prec > _PREC["neg"] or right_side else s
    if isinstance(node, Bin):
        prec = _PREC[node.op]
        if node.op == "^":
            left = _to_str(node.left, prec + 1)
            right = _to_str(node.right, prec)
        else:
            left = _to_str(node.left, prec)
            right = _to_str(node.right, prec + 1, right_side=True)
        s = f"{left} {node.op} {right}" if node.op in "+-" else f"{left}{node.op}{right}"
        return f"({s})" if prec < parent_prec or (right_side and prec == parent_prec) else s
    raise TypeError(node)


# --- evaluation -------------------------------------------------------------


def _free_vars(node: Node) -> frozenset[str]:
    if isinstance(node, Var):
        return frozenset((node.name,))
    if isinstance(node, (Num, Param)):
        return frozenset()
    if isinstance(node, Neg):
        return _free_vars(node.child)
    if isinstance(node, Bin):
        return _free_vars(node.left) | _free_vars(node.right)
    if isinstance(node, Call):
        out: frozenset[str] = frozenset()
        for a in node.args:
            out = out | _free_vars(a)
        return out
    raise TypeError(node)


def _free_params(node: Node) -> frozenset[str]:
    if isinstance(node, Param):
        return frozenset((node.name,))
    if isinstance(node, (Num, Var)):
        return frozenset()
    if isinstance(node, Neg):
        return _free_params(node.child)
    if isinstance(node, Bin):
        return _free_params(node.left) | _free_params(node.right)
    if isinstance(node, Call):
        out: frozenset[str] = frozenset()
        for a in node.args:
            out = out | _free_params(a)
        return out
    raise TypeError(node)


def _int_exponent(node: Node) -> int | None:
    if isinstance(node, Num) and float(node.value).is_integer():
        return int(node.value)
    if isinstance(node, Neg):
        k = _int_exponent(node.child)
        return None if k is None else -k
    return None


class Expr:
    """A parsed immutable expression with its free variable/parameter sets."""

    __slots__ = ("root", "text", "free_vars", "free_params")

    def __init__(self, root: Node, text: str):
        self.root = root
        self.text = text
        self.free_vars = _free_vars(root)
        self.free_params = _free_params(root)

    def __str__(self) -> str:
        return _to_str(self.root)

    def __repr__(self) -> str:
        return f"Expr({str(self)!r})"

    def __eq__(self, other) -> bool:
        return isinstance(other, Expr) and self.root == other.root

    def __hash__(self) -> int:
        return hash(self.root)

    def eval_jet(self, env: dict[str, Jet2], params: dict[str, float]) -> Jet2:
        """Evaluate to a jet; ``env`` binds every free variable to a jet."""
        missing = self.free_vars - env.keys()
        if missing:
            raise ExprError(f"unbound variables: {sorted(missing)}")
        missing_p = self.free_params - params.keys()
        if missing_p:
            raise ExprError(f"unbound parameters: {sorted(missing_p)}")
        d = next(iter(env.values())).dim if env else 0
        out = _eval(self.root, env, params, d)
        if not _finite(out):
            raise ExprError(f"nonfinite value while evaluating {self.text!r}")
        return out

    def eval_value(self, values: dict[str, float], params: dict[str, float]) -> float:
        """Plain float evaluation (no derivatives)."""
        v = _eval_value(self.root, values, params)
        if not math.isfinite(v):
            raise ExprError(f"nonfinite value while evaluating {self.text!r}")
        return v


def _finite(j: Jet2) -> bool:
    import numpy as np

    if not math.isfinite(j.value) or not np.all(np.isfinite(j.grad)):
        return False
    return j.hess is None or bool(np.all(np.isfinite(j.hess)))


def _eval(node: Node, env: dict[str, Jet2], params: dict[str, float], d: int) -> Jet2:
    if isinstance(node, Num):
        return constant(node.value, d)
    if isinstance(node, Var):
        return env[node.name]
    if isinstance(node, Param):
        return constant(params[node.name], d)
    if isinstance(node, Neg):
        return -_eval(node.child, env, params, d)
    if isinstance(node, Bin):
        if node.op == "^":
            k = _int_exponent(node.right)
            base = _eval(node.left, env, params, d)
            if k is not None:
                return int_pow(base, k)
            return general_pow(base, _eval(node.right, env, params, d))
        left = _eval(node.left, env, params, d)
        right = _eval(node.right, env, params, d)
        if node.op == "+":
            return left + right
        if node.op == "-":
            return left - right
        if node.op == "*":
            return left * right
        if node.op == "/":
            return left / right
        raise TypeError(node.op)
    if isinstance(node, Call):
        if node.fn == "pow":
            k = _int_exponent(node.args[1])
            base = _eval(node.args[0], env, params, d)
            if k is not None:
                return int_pow(base, k)
            return general_pow(base, _eval(node.args[1], env, params, d))
        try:
            return apply_function(node.fn, _eval(node.args[0], env, params, d))
        except JetDomainError as exc:
            raise ExprError(f"{exc} in {node.fn}(...)") from exc
    raise TypeError(node)


def _eval_value(node: Node, values: dict[str, float], params: dict[str, float]) -> float:
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return values[node.name]
    if isinstance(node, Param):
        return params[node.name]
    if isinstance(node, Neg):
        return -_eval_value(node.child, values, params)
    if isinstance(node, Bin):
        a = _eval_value(node.left, values, params)
        if node.op == "^":
            k = _int_exponent(node.right)
            if k is not None:
                if k < 0 and a == 0.0:
                    raise ExprError("zero base with negative exponent")
                return a**k
            b = _eval_value(node.right, values, params)
            if a <= 0.0:
                raise ExprError(
                    f"power with non-integer exponent needs positive base, got {a}"
                )
            return a**b
        b = _eval_value(node.right, values, params)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if node.op == "/":
            if b == 0.0:
                raise ExprError("division by zero")
            return a / b
        raise TypeError(node.op)
    if isinstance(node, Call):
        if node.fn == "pow":
            k = _int_exponent(node.args[1])
            a = _eval_value(node.args[0], values, params)
            if k is not None:
                return a**k
            b = _eval_value(node.args[1], values, params)
            if a <= 0.0:
                raise ExprError("power with non-integer exponent needs positive base")
            return a**b
        a = _eval_value(node.args[0], values, params)
        if node.fn == "sqrt":
            if a <= 0.0:
                raise ExprError(f"sqrt of non-positive value {a}")
            return math.sqrt(a)
        if node.fn == "cbrt":
            return math.copysign(abs(a) ** (1.0 / 3.0), a)
        if node.fn == "log":
            if a <= 0.0:
                raise ExprError(f"log of non-positive value {a}")
            return math.log(a)
        if node.fn == "abs":
            return abs(a)
        return getattr(math, node.fn)(a)
    raise TypeError(node)


def parse(text: str, allowed_vars, params=()) -> Expr:
    """Parse ``text`` against the given variable and parameter names.

    Raises ``ExprError`` (with a byte offset) on malformed input, unknown
    identifiers or wrong arity.  Variable and parameter names must be
    disjoint.
    """
    variables = frozenset(allowed_vars)
    param_set = frozenset(params)
    overlap = variables & param_set
    if overlap:
        raise ExprError(f"names used both as variable and parameter: {sorted(overlap)}")
    if not text.strip():
        raise ExprError("empty expression", 0)
    parser = _Parser(text, variables, param_set)
    return Expr(parser.parse(), text)
