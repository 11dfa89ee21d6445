"""Coefficient data: scalar expressions, degenerate matrix fields, subunit tuples.

The expression grammar is deliberately closed so that problem files stay
portable::

    expr   := ('+'|'-')? term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := base ('^' number)?
    base   := number | 'x' | 'y' | func '(' expr ')' | '(' expr ')'
    func   := 'sin' | 'cos' | 'exp' | 'abs' | 'min' | 'max'

min and max take two comma-separated arguments; numbers are decimal
constants with optional exponent.  A single leading sign is accepted.
"""

import re
from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from .errors import ComparabilityError, EvaluationError, ExpressionError

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+\.\d*(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?|\d+(?:[eE][-+]?\d+)?)"
    r"|(?P<name>[A-Za-z_]+)"
    r"|(?P<op>[-+*/^(),]))"
)

_UNARY_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "abs": np.abs}
_BINARY_FUNCS = {"min": np.minimum, "max": np.maximum}


def _tokenize(text):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            stripped = text[pos:].lstrip()
            if not stripped:
                break
            raise ExpressionError(
                f"unexpected character {stripped[0]!r} in {text!r}", position=pos
            )
        if m.group("num") is not None:
            tokens.append(("num", float(m.group("num")), m.start("num")))
        elif m.group("name") is not None:
            tokens.append(("name", m.group("name"), m.start("name")))
        else:
            tokens.append(("op", m.group("op"), m.start("op")))
        pos = m.end()
    tokens.append(("end", None, len(text)))
    return tokens


class _Parser:
    def __init__(self, text):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op):
        kind, val, pos = self.take()
        if kind != "op" or val != op:
            raise ExpressionError(f"expected {op!r} in {self.text!r}", position=pos)

    def parse(self):
        fn = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            raise ExpressionError(
                f"trailing input {val!r} in {self.text!r}", position=pos
            )
        return fn

    def expr(self):
        kind, val, _ = self.peek()
        negate = False
        if kind == "op" and val in "+-":
            self.take()
            negate = val == "-"
        fn = self.term()
        if negate:
            inner = fn
            fn = lambda x, y: -inner(x, y)
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "+-":
                self.take()
                rhs = self.term()
                lhs = fn
                if val == "+":
                    fn = lambda x, y, a=lhs, b=rhs: a(x, y) + b(x, y)
                else:
                    fn = lambda x, y, a=lhs, b=rhs: a(x, y) - b(x, y)
            else:
                return fn

    def term(self):
        fn = self.factor()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "*/":
                self.take()
                rhs = self.factor()
                lhs = fn
                if val == "*":
                    fn = lambda x, y, a=lhs, b=rhs: a(x, y) * b(x, y)
                else:
                    fn = lambda x, y, a=lhs, b=rhs: a(x, y) / b(x, y)
            else:
                return fn

    def factor(self):
        fn = self.base()
        kind, val, _ = self.peek()
        if kind == "op" and val == "^":
            self.take()
            kind, exponent, pos = self.take()
            if kind != "num":
                raise ExpressionError(
                    f"exponent must be a number in {self.text!r}", position=pos
                )
            inner = fn
            fn = lambda x, y, e=exponent: inner(x, y) ** e
        return fn

    def base(self):
        kind, val, pos = self.take()
        if kind == "num":
            return lambda x, y, c=val: np.full_like(x, c)
        if kind == "name":
            if val == "x":
                return lambda x, y: x
            if val == "y":
                return lambda x, y: y
            if val in _UNARY_FUNCS:
                self.expect_op("(")
                arg = self.expr()
                self.expect_op(")")
                return lambda x, y, f=_UNARY_FUNCS[val], a=arg: f(a(x, y))
            if val in _BINARY_FUNCS:
                self.expect_op("(")
                a = self.expr()
                self.expect_op(",")
                b = self.expr()
                self.expect_op(")")
                return lambda x, y, f=_BINARY_FUNCS[val], u=a, v=b: f(u(x, y), v(x, y))
            raise ExpressionError(f"unknown identifier {val!r}", position=pos)
        if kind == "op" and val == "(":
            fn = self.expr()
            self.expect_op(")")
            return fn
        raise ExpressionError(f"unexpected token in {self.text!r}", position=pos)


class ScalarExpr:
    """Parsed coefficient expression, evaluated pointwise on arrays."""

    def __init__(self, source):
        if isinstance(source, (int, float)):
            source = repr(float(source))
        self.source = source.strip()
        self._fn = _Parser(self.source).parse()

    def __repr__(self):
        return f"ScalarExpr({self.source!r})"

    def evaluate(self, points):
        """Evaluate at points of shape (m, dim); raises on non-finite values."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        x = pts[:, 0]
        y = pts[:, 1] if pts.shape[1] > 1 else np.zeros_like(x)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            vals = self._fn(x, y)
        vals = np.asarray(vals, dtype=float)
        bad = ~np.isfinite(vals)
        if bad.any():
            where = pts[np.argmax(bad)]
            raise EvaluationError(
                f"{self.source!r} is not finite at {tuple(where)}", point=tuple(where)
            )
        return vals

    def __call__(self, points):
        return self.evaluate(points)


def as_expr(value):
    return value if isinstance(value, ScalarExpr) else ScalarExpr(value)


ZERO = ScalarExpr("0")
ONE = ScalarExpr("1")


@dataclass
class MatrixField:
    """Symmetric n x n coefficient matrix; only the upper triangle is stored."""

    n: int
    entries: dict

    @classmethod
    def from_entries(cls, n, **named):
        """Build from entries like e11='1', e12='x' (unset entries are zero)."""
        entries = {}
        for key, value in named.items():
            if value is None:
                continue
            i, j = int(key[1]) - 1, int(key[2]) - 1
            if i > j:
                i, j = j, i
            entries[(i, j)] = as_expr(value)
        return cls(n=n, entries=entries)

    @classmethod
    def identity(cls, n):
        return cls(n=n, entries={(i, i): ONE for i in range(n)})

    @classmethod
    def diagonal(cls, exprs):
        exprs = [as_expr(e) for e in exprs]
        return cls(n=len(exprs), entries={(i, i): e for i, e in enumerate(exprs)})

    @classmethod
    def scaled_identity(cls, n, expr):
        expr = as_expr(expr)
        return cls(n=n, entries={(i, i): expr for i in range(n)})

    def evaluate(self, points):
        """Matrices at points, shape (m, n, n); symmetric by construction."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        m = pts.shape[0]
        out = np.zeros((m, self.n, self.n))
        for (i, j), expr in self.entries.items():
            vals = expr.evaluate(pts)
            out[:, i, j] = vals
            if i != j:
                out[:, j, i] = vals
        return out


def eval_matrix(field, point):
    """Single-point evaluation returning a plain (n, n) symmetric matrix."""
    return field.evaluate(np.asarray(point, dtype=float).reshape(1, -1))[0]


def eval_vector_field(components, points):
    """Stack of component values for a vector field, shape (m, n)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    return np.column_stack([as_expr(c).evaluate(pts) for c in components])


@dataclass
class SubunitTuple:
    """Tuple of vector fields, each a list of n component expressions."""

    fields: list

    @classmethod
    def from_components(cls, fields):
        return cls(fields=[[as_expr(c) for c in f] for f in fields])

    def __len__(self):
        return len(self.fields)

    def __iter__(self):
        return iter(self.fields)

    def evaluate(self, points):
        """Values of all member fields, shape (N, m, n)."""
        return np.stack([eval_vector_field(f, points) for f in self.fields])


EMPTY_TUPLE = SubunitTuple(fields=[])


def unit_directions(n, count=32):
    """Deterministic direction set: +-1 in 1D, a fan plus axes in 2D."""
    if n == 1:
        return np.array([[1.0], [-1.0]])
    angles = 2.0 * np.pi * np.arange(count) / count
    fan = np.column_stack([np.cos(angles), np.sin(angles)])
    axes = np.array([[1.0, 0.0], [0.0, 1.0]])
    return np.vstack([fan, axes])


def halton_points(bbox, count, seed):
    """Seeded low-discrepancy points inside the given bounding box."""
    dim = len(bbox)
    sampler = qmc.Halton(d=dim, scramble=True, seed=seed)
    unit = sampler.random(count)
    lo = np.array([b[0] for b in bbox])
    hi = np.array([b[1] for b in bbox])
    return lo + unit * (hi - lo)


def quadratic_form(matrices, directions):
    """<xi, A xi> for each matrix/direction pair, shape (m, d)."""
    return np.einsum("dj,mjk,dk->md", directions, matrices, directions)


@dataclass
class SubunitReport:
    ok: bool
    worst_ratio: float
    witness: tuple = None


def check_subunit(W, Q, sample_points, directions_per_point=32, tol=1e-10):
    """Check (W(x).xi)^2 <= <xi, Q(x) xi> over sampled points and directions.

    worst_ratio is the largest lhs/rhs encountered, with 0/0 counted as 1.
    On failure the witness records the offending (point, direction).
    """
    pts = np.atleast_2d(np.asarray(sample_points, dtype=float))
    if pts.shape[0] == 0:
        raise ValueError("sample_points must be nonempty")
    n = Q.n
    dirs = unit_directions(n, max(int(directions_per_point), 4))
    wvals = eval_vector_field(W, pts)
    qmats = Q.evaluate(pts)
    lhs = (wvals @ dirs.T) ** 2
    rhs = quadratic_form(qmats, dirs)
    tiny = 1e-30
    both_zero = (np.abs(lhs) < tiny) & (np.abs(rhs) < tiny)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(both_zero, 1.0, lhs / np.maximum(rhs, tiny))
    worst = float(np.max(ratio))
    violations = lhs > rhs + tol
    if violations.any():
        flat = np.argmax(lhs - rhs)
        ip, idir = np.unravel_index(flat, lhs.shape)
        return SubunitReport(
            ok=False, worst_ratio=worst, witness=(tuple(pts[ip]), tuple(dirs[idir]))
        )
    return SubunitReport(ok=True, worst_ratio=worst)


def estimate_comparability(P, Q, sample_points, directions_per_point=32):
    """Sampled range (c1_hat, C1_hat) of <xi,P xi>/<xi,Q xi>.

    Samples where both forms are below 1e-14 contribute a neutral ratio 1;
    a sample where exactly one form vanishes is a comparability violation.
    """
    pts = np.atleast_2d(np.asarray(sample_points, dtype=float))
    dirs = unit_directions(Q.n, max(int(directions_per_point), 4))
    pform = quadratic_form(P.evaluate(pts), dirs)
    qform = quadratic_form(Q.evaluate(pts), dirs)
    tol = 1e-14
    p_zero = np.abs(pform) < tol
    q_zero = np.abs(qform) < tol
    mismatch = p_zero ^ q_zero
    if mismatch.any():
        flat = np.argmax(mismatch)
        ip, idir = np.unravel_index(flat, pform.shape)
        raise ComparabilityError(
            "one quadratic form vanishes where the other does not "
            f"(P={pform[ip, idir]:.3e}, Q={qform[ip, idir]:.3e})",
            witness=(tuple(pts[ip]), tuple(dirs[idir])),
        )
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(p_zero & q_zero, 1.0, pform / np.where(q_zero, 1.0, qform))
    return float(np.min(ratio)), float(np.max(ratio))


def check_nonnegative(field, sample_points, tol=1e-12):
    """Smallest eigenvalue over the samples; nonnegative definiteness check."""
    pts = np.atleast_2d(np.asarray(sample_points, dtype=float))
    mats = field.evaluate(pts)
    if field.n == 1:
        smallest = float(np.min(mats[:, 0, 0]))
    else:
        tr = mats[:, 0, 0] + mats[:, 1, 1]
        det = mats[:, 0, 0] * mats[:, 1, 1] - mats[:, 0, 1] ** 2
        disc = np.sqrt(np.maximum(tr * tr - 4.0 * det, 0.0))
        smallest = float(np.min(0.5 * (tr - disc)))
    return smallest >= -tol, smallest
