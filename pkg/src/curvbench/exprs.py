"""Expression trees for metric components, with exact second-order jets.

Metric curvature needs exactly two derivatives of the components, so every
expression evaluates to a second-order forward-mode jet: value, gradient and
Hessian in one pass, exact to machine precision for the composed elementary
functions (no truncation error, no tape).  Evaluation is vectorized over a
batch of points; all arrays carry the batch axis first.

Singular evaluation (log of a non-positive value, division by zero, the kink
of abs when derivatives are requested) raises ExprDomainError naming the
offending subexpression — never a silent NaN.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Expr", "Const", "Var", "BinOp", "Func",
    "Jet2", "Jet2Value",
    "ExprError", "ExprDomainError", "ParseError",
    "parse_expr", "print_expr", "eval_jet2", "eval_jet2_batch",
    "eval_value_batch", "uses_abs",
    "diff_expr", "simplify_expr",
    "expr_add", "expr_sub", "expr_mul", "expr_div", "expr_neg", "expr_pow",
    "ABS_KINK_TOL",
]

# jets of abs() are refused within this distance of the kink
ABS_KINK_TOL = 1e-8

FUNCTIONS = ("sin", "cos", "tan", "exp", "log", "sqrt", "abs")


class ExprError(ValueError):
    pass


class ExprDomainError(ExprError):
    """Singular evaluation, reported with the offending subexpression."""


class ParseError(ExprError):
    def __init__(self, message, line=None, col=None):
        self.line = line
        self.col = col
        where = f" (line {line}, col {col})" if line is not None else ""
        super().__init__(f"{message}{where}")


# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Expr:
    pass


@dataclass(frozen=True)
class Const(Expr):
    value: float


@dataclass(frozen=True)
class Var(Expr):
    index: int
    name: str


@dataclass(frozen=True)
class BinOp(Expr):
    op: str         # one of + - * / ^
    lhs: Expr
    rhs: Expr


@dataclass(frozen=True)
class Func(Expr):
    fn: str         # one of FUNCTIONS, or "neg"
    arg: Expr


def uses_abs(expr: Expr) -> bool:
    if isinstance(expr, Func):
        return expr.fn == "abs" or uses_abs(expr.arg)
    if isinstance(expr, BinOp):
        return uses_abs(expr.lhs) or uses_abs(expr.rhs)
    return False


def _free_vars(expr: Expr, out: set) -> set:
    if isinstance(expr, Var):
        out.add(expr.index)
    elif isinstance(expr, BinOp):
        _free_vars(expr.lhs, out)
        _free_vars(expr.rhs, out)
    elif isinstance(expr, Func):
        _free_vars(expr.arg, out)
    return out


def check_dimension(expr: Expr, dim: int) -> None:
    bad = [i for i in _free_vars(expr, set()) if i >= dim]
    if bad:
        raise ExprError(f"expression uses coordinate index {max(bad)} "
                        f"but the declared dimension is {dim}")


# ---------------------------------------------------------------------------
# Jets


@dataclass
class Jet2:
    """Batched second-order jet: val (N,), grad (N,n), hess (N,n,n)."""
    val: np.ndarray
    grad: np.ndarray
    hess: np.ndarray


@dataclass
class Jet2Value:
    """Scalar-point jet as a plain record."""
    value: float
    gradient: np.ndarray   # (n,)
    hessian: np.ndarray    # (n,n) symmetric


def _const_jet(value, N, n):
    return Jet2(np.full(N, float(value)),
                np.zeros((N, n)),
                np.zeros((N, n, n)))


def _var_jet(pts, index):
    N, n = pts.shape
    grad = np.zeros((N, n))
    grad[:, index] = 1.0
    return Jet2(pts[:, index].astype(float), grad, np.zeros((N, n, n)))


def _outer_sym(a, b):
    # symmetrized outer product of two (N,n) gradients -> (N,n,n)
    ab = np.einsum("Ni,Nj->Nij", a, b, optimize=False)
    return ab + ab.transpose(0, 2, 1)


def _chain(j: Jet2, f0, f1, f2) -> Jet2:
    """Jet of phi(u) from phi(u), phi'(u), phi''(u) at u = j.val."""
    grad = f1[:, None] * j.grad
    hess = (f1[:, None, None] * j.hess
            + f2[:, None, None] * np.einsum("Ni,Nj->Nij", j.grad, j.grad,
                                            optimize=False))
    return Jet2(f0, grad, hess)


def _raise_domain(expr, reason):
    raise ExprDomainError(f"{reason} in subexpression '{print_expr(expr)}'")


def _check_finite(expr, arr, reason):
    if not np.all(np.isfinite(arr)):
        _raise_domain(expr, reason)


def _jet_mul(a: Jet2, b: Jet2) -> Jet2:
    val = a.val * b.val
    grad = a.grad * b.val[:, None] + b.grad * a.val[:, None]
    hess = (a.hess * b.val[:, None, None] + b.hess * a.val[:, None, None]
            + _outer_sym(a.grad, b.grad))
    return Jet2(val, grad, hess)


def _jet_recip(expr, b: Jet2) -> Jet2:
    if np.any(b.val == 0.0):
        _raise_domain(expr, "division by zero")
    inv = 1.0 / b.val
    return _chain(b, inv, -inv * inv, 2.0 * inv * inv * inv)


def _eval(expr: Expr, pts: np.ndarray, want_jets: bool, memo=None):
    """Recursive evaluator; returns Jet2 or plain (N,) values.

    Results are memoized on node identity for the duration of one top-level
    call: symbolically assembled metrics share curvature subtrees between
    components, and re-walking shared nodes once per path grows
    exponentially with expression depth."""
    if memo is None:
        memo = {}
    cached = memo.get(id(expr))
    if cached is not None:
        return cached
    N, n = pts.shape
    if isinstance(expr, Const):
        out = _const_jet(expr.value, N, n) if want_jets else np.full(N, float(expr.value))
    elif isinstance(expr, Var):
        out = _var_jet(pts, expr.index) if want_jets else pts[:, expr.index].astype(float)
    elif isinstance(expr, BinOp):
        a = _eval(expr.lhs, pts, want_jets, memo)
        b = _eval(expr.rhs, pts, want_jets, memo)
        out = _jet_binop(expr, a, b) if want_jets else _plain_binop(expr, a, b)
        _check_finite(expr, out.val if want_jets else out, "non-finite value")
    elif isinstance(expr, Func):
        a = _eval(expr.arg, pts, want_jets, memo)
        out = _jet_func(expr, a) if want_jets else _plain_func(expr, a)
        _check_finite(expr, out.val if want_jets else out, "non-finite value")
    else:
        raise ExprError(f"unknown AST node {expr!r}")
    memo[id(expr)] = out
    return out


def _plain_binop(expr, a, b):
    op = expr.op
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        if np.any(b == 0.0):
            _raise_domain(expr, "division by zero")
        return a / b
    if op == "^":
        return _plain_pow(expr, a, b)
    raise ExprError(f"unknown operator {op!r}")


def _plain_pow(expr, a, b):
    # integer exponents keep negative bases legal
    if isinstance(expr.rhs, Const) and float(expr.rhs.value).is_integer():
        k = int(expr.rhs.value)
        if k < 0 and np.any(a == 0.0):
            _raise_domain(expr, "zero raised to a negative power")
        with np.errstate(all="ignore"):
            return a ** k
    if np.any(a <= 0.0):
        _raise_domain(expr, "non-integer power of a non-positive base")
    return a ** b


def _jet_binop(expr, a: Jet2, b: Jet2) -> Jet2:
    op = expr.op
    if op == "+":
        return Jet2(a.val + b.val, a.grad + b.grad, a.hess + b.hess)
    if op == "-":
        return Jet2(a.val - b.val, a.grad - b.grad, a.hess - b.hess)
    if op == "*":
        return _jet_mul(a, b)
    if op == "/":
        return _jet_mul(a, _jet_recip(expr, b))
    if op == "^":
        return _jet_pow(expr, a, b)
    raise ExprError(f"unknown operator {op!r}")


def _jet_pow(expr, a: Jet2, b: Jet2) -> Jet2:
    if isinstance(expr.rhs, Const):
        c = float(expr.rhs.value)
        if c == 0.0:
            N, n = a.grad.shape
            return _const_jet(1.0, N, n)
        if c == 1.0:
            return a
        if c.is_integer():
            k = int(c)
            if k < 0 and np.any(a.val == 0.0):
                _raise_domain(expr, "zero raised to a negative power")
            with np.errstate(all="ignore"):
                f0 = a.val ** k
                f1 = k * a.val ** (k - 1)
                f2 = k * (k - 1) * a.val ** (k - 2) if k != 1 else np.zeros_like(a.val)
            return _chain(a, f0, f1, f2)
        if np.any(a.val <= 0.0):
            _raise_domain(expr, "non-integer power of a non-positive base")
        f0 = a.val ** c
        f1 = c * a.val ** (c - 1.0)
        f2 = c * (c - 1.0) * a.val ** (c - 2.0)
        return _chain(a, f0, f1, f2)
    # general f^g = exp(g log f)
    if np.any(a.val <= 0.0):
        _raise_domain(expr, "non-integer power of a non-positive base")
    log_a = _chain(a, np.log(a.val), 1.0 / a.val, -1.0 / (a.val * a.val))
    prod = _jet_mul(b, log_a)
    e = np.exp(prod.val)
    return _chain(prod, e, e, e)


def _jet_func(expr, a: Jet2) -> Jet2:
    fn = expr.fn
    u = a.val
    if fn == "neg":
        return Jet2(-u, -a.grad, -a.hess)
    if fn == "sin":
        s, c = np.sin(u), np.cos(u)
        return _chain(a, s, c, -s)
    if fn == "cos":
        s, c = np.sin(u), np.cos(u)
        return _chain(a, c, -s, -c)
    if fn == "tan":
        t = np.tan(u)
        sec2 = 1.0 + t * t
        return _chain(a, t, sec2, 2.0 * t * sec2)
    if fn == "exp":
        e = np.exp(u)
        return _chain(a, e, e, e)
    if fn == "log":
        if np.any(u <= 0.0):
            _raise_domain(expr, "log of a non-positive value")
        inv = 1.0 / u
        return _chain(a, np.log(u), inv, -inv * inv)
    if fn == "sqrt":
        if np.any(u <= 0.0):
            _raise_domain(expr, "sqrt of a non-positive value (derivative is singular at 0)")
        r = np.sqrt(u)
        return _chain(a, r, 0.5 / r, -0.25 / (r * u))
    if fn == "abs":
        if np.any(np.abs(u) < ABS_KINK_TOL):
            _raise_domain(expr, f"abs evaluated within {ABS_KINK_TOL:g} of its kink")
        s = np.sign(u)
        return _chain(a, np.abs(u), s, np.zeros_like(u))
    raise ExprError(f"unknown function {fn!r}")


def _plain_func(expr, u):
    fn = expr.fn
    if fn == "neg":
        return -u
    if fn == "sin":
        return np.sin(u)
    if fn == "cos":
        return np.cos(u)
    if fn == "tan":
        return np.tan(u)
    if fn == "exp":
        return np.exp(u)
    if fn == "log":
        if np.any(u <= 0.0):
            _raise_domain(expr, "log of a non-positive value")
        return np.log(u)
    if fn == "sqrt":
        if np.any(u < 0.0):
            _raise_domain(expr, "sqrt of a negative value")
        return np.sqrt(u)
    if fn == "abs":
        return np.abs(u)
    raise ExprError(f"unknown function {fn!r}")


def eval_jet2_batch(expr: Expr, pts: np.ndarray, memo=None) -> Jet2:
    """Evaluate value/gradient/Hessian at pts of shape (N, n).

    Pass one memo dict across several calls at the same pts to share work
    between expressions with common subtrees (metric components of an
    assembled collar do this heavily)."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    return _eval(expr, pts, want_jets=True, memo=memo)


def eval_value_batch(expr: Expr, pts: np.ndarray, memo=None) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    return _eval(expr, pts, want_jets=False, memo=memo)


def eval_jet2(expr: Expr, point) -> Jet2Value:
    """Single-point jet, as (value, gradient, hessian)."""
    j = eval_jet2_batch(expr, np.asarray(point, dtype=float)[None, :])
    return Jet2Value(float(j.val[0]), j.grad[0], j.hess[0])


# ---------------------------------------------------------------------------
# Parser: classic recursive descent over a regex token stream.
#
#   expr   := term (('+'|'-') term)*
#   term   := factor (('*'|'/') factor)*
#   factor := ('-'|'+') factor | power
#   power  := atom ('^' factor)?          (right-associative)
#   atom   := number | name | name '(' expr ')' | '(' expr ')'

_TOKEN_RE = re.compile(r"""
    (?P<num>(\d+\.\d*|\.\d+|\d+)([eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()])
  | (?P<ws>\s+)
  | (?P<bad>.)
""", re.VERBOSE)


@dataclass
class _Token:
    kind: str
    text: str
    col: int


def _tokenize(text, line=None):
    out = []
    for m in _TOKEN_RE.finditer(text):
        kind = m.lastgroup
        if kind == "ws":
            continue
        if kind == "bad":
            raise ParseError(f"unexpected character {m.group()!r}", line, m.start() + 1)
        out.append(_Token(kind, m.group(), m.start() + 1))
    return out


class _Parser:
    def __init__(self, tokens, var_names, line=None):
        self.toks = tokens
        self.pos = 0
        self.vars = {name: i for i, name in enumerate(var_names)}
        self.line = line

    def peek(self):
        return self.toks[self.pos] if self.pos < len(self.toks) else None

    def take(self):
        tok = self.peek()
        if tok is None:
            raise ParseError("unexpected end of expression", self.line,
                             self.toks[-1].col + len(self.toks[-1].text) if self.toks else 1)
        self.pos += 1
        return tok

    def expect(self, text):
        tok = self.take()
        if tok.text != text:
            raise ParseError(f"expected {text!r}, found {tok.text!r}", self.line, tok.col)
        return tok

    def parse(self):
        node = self.expr()
        tok = self.peek()
        if tok is not None:
            raise ParseError(f"trailing input {tok.text!r}", self.line, tok.col)
        return node

    def expr(self):
        node = self.term()
        while (tok := self.peek()) is not None and tok.text in "+-":
            self.take()
            node = BinOp(tok.text, node, self.term())
        return node

    def term(self):
        node = self.factor()
        while (tok := self.peek()) is not None and tok.text in "*/":
            self.take()
            node = BinOp(tok.text, node, self.factor())
        return node

    def factor(self):
        tok = self.peek()
        if tok is not None and tok.text in "+-":
            self.take()
            inner = self.factor()
            return inner if tok.text == "+" else Func("neg", inner)
        return self.power()

    def power(self):
        base = self.atom()
        tok = self.peek()
        if tok is not None and tok.text == "^":
            self.take()
            return BinOp("^", base, self.factor())
        return base

    def atom(self):
        tok = self.take()
        if tok.kind == "num":
            return Const(float(tok.text))
        if tok.kind == "name":
            nxt = self.peek()
            if nxt is not None and nxt.text == "(":
                if tok.text not in FUNCTIONS:
                    raise ParseError(f"unknown function {tok.text!r}", self.line, tok.col)
                self.take()
                arg = self.expr()
                self.expect(")")
                return Func(tok.text, arg)
            if tok.text not in self.vars:
                raise ParseError(f"unknown coordinate {tok.text!r}", self.line, tok.col)
            return Var(self.vars[tok.text], tok.text)
        if tok.text == "(":
            node = self.expr()
            self.expect(")")
            return node
        raise ParseError(f"unexpected token {tok.text!r}", self.line, tok.col)


def parse_expr(text: str, var_names, line=None) -> Expr:
    """Parse one expression; var_names fixes the coordinate name -> index map."""
    tokens = _tokenize(text, line)
    if not tokens:
        raise ParseError("empty expression", line, 1)
    return _Parser(tokens, var_names, line).parse()


# ---------------------------------------------------------------------------
# Printer (round-trips through parse_expr)

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}


def print_expr(expr: Expr) -> str:
    return _print(expr, 0)


def _print(expr, parent_prec):
    if isinstance(expr, Const):
        v = expr.value
        if v == int(v) and abs(v) < 1e15:
            s = str(int(v))
        else:
            s = repr(v)
        # negative constants need protection inside tighter contexts
        return f"({s})" if v < 0 and parent_prec > 1 else s
    if isinstance(expr, Var):
        return expr.name
    if isinstance(expr, Func):
        if expr.fn == "neg":
            inner = _print(expr.arg, _PREC["neg"])
            s = f"-{inner}"
            return f"({s})" if parent_prec > _PREC["neg"] - 1 else s
        return f"{expr.fn}({_print(expr.arg, 0)})"
    if isinstance(expr, BinOp):
        prec = _PREC[expr.op]
        # left child at same precedence is fine for left-assoc ops; right child
        # needs a bump except for right-assoc '^'
        lhs = _print(expr.lhs, prec if expr.op != "^" else prec + 1)
        rhs = _print(expr.rhs, prec + 1 if expr.op != "^" else prec)
        s = f"{lhs} {expr.op} {rhs}" if expr.op in "+-" else f"{lhs}{expr.op}{rhs}"
        return f"({s})" if prec < parent_prec else s
    raise ExprError(f"unknown AST node {expr!r}")


def const(value) -> Const:
    return Const(float(value))


# ---------------------------------------------------------------------------
# Symbolic differentiation
#
# Collar assembly composes curvature coefficients of a boundary metric into
# 4D components, and those coefficients involve third and fourth derivatives
# of the boundary expressions — outside what the second-order jets carry.
# The constructors below fold constants and prune algebraic identities
# (x+0, 1*x, 0*x, x^1, ...) so derivative trees stay as small as the input
# allows; they produce exactly the same node types the evaluator handles.


def _cval(e, v):
    return isinstance(e, Const) and e.value == v


def expr_add(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    if _cval(a, 0.0):
        return b
    if _cval(b, 0.0):
        return a
    return BinOp("+", a, b)


def expr_sub(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    if _cval(b, 0.0):
        return a
    if _cval(a, 0.0):
        return expr_neg(b)
    return BinOp("-", a, b)


def expr_neg(a: Expr) -> Expr:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Func) and a.fn == "neg":
        return a.arg
    return Func("neg", a)


def expr_mul(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    if _cval(a, 0.0) or _cval(b, 0.0):
        return Const(0.0)
    if _cval(a, 1.0):
        return b
    if _cval(b, 1.0):
        return a
    if _cval(a, -1.0):
        return expr_neg(b)
    if _cval(b, -1.0):
        return expr_neg(a)
    return BinOp("*", a, b)


def expr_div(a: Expr, b: Expr) -> Expr:
    if isinstance(b, Const) and b.value != 0.0:
        if isinstance(a, Const):
            return Const(a.value / b.value)
        if b.value == 1.0:
            return a
    if _cval(a, 0.0) and not _cval(b, 0.0):
        return Const(0.0)
    return BinOp("/", a, b)


def expr_pow(a: Expr, k) -> Expr:
    """a^k for a constant exponent."""
    k = float(k)
    if k == 0.0:
        return Const(1.0)
    if k == 1.0:
        return a
    if isinstance(a, Const):
        return Const(a.value ** k)
    return BinOp("^", a, Const(k))


def diff_expr(expr: Expr, index: int) -> Expr:
    """Exact partial derivative d(expr)/d x_index as a new tree.

    abs differentiates to arg/abs(arg); the evaluator's kink guard still
    protects the result near zero.  Derivatives are memoized on node
    identity within the call: repeated differentiation shares subtrees
    heavily, and without the cache the walk re-derives each shared subtree
    once per path, which grows exponentially with derivative depth."""
    memo: dict[int, Expr] = {}

    def d(e: Expr) -> Expr:
        out = memo.get(id(e))
        if out is None:
            out = _diff_node(e, index, d)
            memo[id(e)] = out
        return out

    return d(expr)


def _diff_node(expr: Expr, index: int, d) -> Expr:
    if isinstance(expr, Const):
        return Const(0.0)
    if isinstance(expr, Var):
        return Const(1.0 if expr.index == index else 0.0)
    if isinstance(expr, BinOp):
        a, b = expr.lhs, expr.rhs
        if expr.op == "^" and isinstance(b, Const):
            c = float(b.value)
            da = d(a)
            return expr_mul(expr_mul(Const(c), expr_pow(a, c - 1.0)), da)
        da, db = d(a), d(b)
        if expr.op == "+":
            return expr_add(da, db)
        if expr.op == "-":
            return expr_sub(da, db)
        if expr.op == "*":
            return expr_add(expr_mul(da, b), expr_mul(a, db))
        if expr.op == "/":
            num = expr_sub(expr_mul(da, b), expr_mul(a, db))
            return expr_div(num, expr_pow(b, 2))
        if expr.op == "^":
            # a^b = exp(b log a):  a^b (db log a + b da / a)
            t = expr_add(expr_mul(db, Func("log", a)),
                         expr_div(expr_mul(b, da), a))
            return expr_mul(expr, t)
        raise ExprError(f"unknown operator {expr.op!r}")
    if isinstance(expr, Func):
        u = expr.arg
        du = d(u)
        if _cval(du, 0.0):
            return Const(0.0)
        fn = expr.fn
        if fn == "neg":
            return expr_neg(du)
        if fn == "log":
            return expr_div(du, u)
        if fn == "sqrt":
            return expr_div(du, expr_mul(Const(2.0), expr))
        if fn == "abs":
            return expr_mul(expr_div(u, expr), du)
        if fn == "sin":
            outer = Func("cos", u)
        elif fn == "cos":
            outer = expr_neg(Func("sin", u))
        elif fn == "tan":
            outer = expr_add(Const(1.0), expr_pow(Func("tan", u), 2))
        elif fn == "exp":
            outer = expr
        else:
            raise ExprError(f"unknown function {fn!r}")
        return expr_mul(outer, du)
    raise ExprError(f"unknown AST node {expr!r}")


def simplify_expr(expr: Expr) -> Expr:
    """One bottom-up folding pass through the smart constructors."""
    if isinstance(expr, BinOp):
        a, b = simplify_expr(expr.lhs), simplify_expr(expr.rhs)
        if expr.op == "^":
            if isinstance(b, Const):
                return expr_pow(a, b.value)
            return BinOp("^", a, b)
        build = {"+": expr_add, "-": expr_sub, "*": expr_mul, "/": expr_div}
        return build[expr.op](a, b)
    if isinstance(expr, Func):
        arg = simplify_expr(expr.arg)
        if expr.fn == "neg":
            return expr_neg(arg)
        return Func(expr.fn, arg)
    return expr
