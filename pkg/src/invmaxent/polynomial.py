"""Sparse multivariate polynomials over Q, with a small expression parser.

Terms are stored as ``{exponent tuple: Fraction}`` with zero coefficients
dropped, so two polynomials are equal iff their term dicts are equal.
"""

from __future__ import annotations

import re
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .errors import DimensionMismatch, PolySyntaxError, UnknownVariable

Exponent = tuple[int, ...]


class Poly:
    __slots__ = ("nvars", "terms")

    def __init__(self, nvars: int, terms: Mapping[Exponent, Fraction] | None = None):
        self.nvars = nvars
        clean: dict[Exponent, Fraction] = {}
        for exp, c in (terms or {}).items():
            if len(exp) != nvars:
                raise DimensionMismatch(f"exponent {exp} in a {nvars}-variable polynomial")
            c = Fraction(c)
            if c:
                clean[tuple(exp)] = c
        self.terms = clean

    @classmethod
    def constant(cls, c, nvars: int) -> "Poly":
        return cls(nvars, {(0,) * nvars: Fraction(c)})

    @classmethod
    def variable(cls, i: int, nvars: int) -> "Poly":
        """The i-th variable, 0-based."""
        exp = [0] * nvars
        exp[i] = 1
        return cls(nvars, {tuple(exp): Fraction(1)})

    # -- arithmetic ---------------------------------------------------------

    def _coerce(self, other) -> "Poly":
        if isinstance(other, Poly):
            if other.nvars != self.nvars:
                raise DimensionMismatch(f"{self.nvars}-variable vs {other.nvars}-variable polynomial")
            return other
        if isinstance(other, (int, Fraction)):
            return Poly.constant(other, self.nvars)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out = dict(self.terms)
        for exp, c in other.terms.items():
            out[exp] = out.get(exp, 0) + c
        return Poly(self.nvars, out)

    __radd__ = __add__

    def __neg__(self):
        return Poly(self.nvars, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out: dict[Exponent, Fraction] = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                out[e] = out.get(e, 0) + c1 * c2
        return Poly(self.nvars, out)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        if not isinstance(k, int) or k < 0:
            raise ValueError("exponent must be a nonnegative integer")
        result = Poly.constant(1, self.nvars)
        base = self
        while k:
            if k & 1:
                result = result * base
            k >>= 1
            if k:
                base = base * base
        return result

    def __eq__(self, other):
        if isinstance(other, (int, Fraction)):
            other = Poly.constant(other, self.nvars)
        if not isinstance(other, Poly):
            return NotImplemented
        return self.nvars == other.nvars and self.terms == other.terms

    def __hash__(self):
        return hash((self.nvars, frozenset(self.terms.items())))

    # -- queries ------------------------------------------------------------

    def is_zero(self) -> bool:
        return not self.terms

    @property
    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=0)

    def __call__(self, point: Sequence) -> Fraction:
        return eval_poly(self, point)

    def compose(self, subs: Sequence["Poly"]) -> "Poly":
        """Substitute ``subs[i]`` for variable i; all subs share one ring."""
        if len(subs) != self.nvars:
            raise DimensionMismatch(f"need {self.nvars} substitutions, got {len(subs)}")
        if not subs:
            return self
        target = subs[0].nvars
        powers: list[dict[int, Poly]] = [{0: Poly.constant(1, target), 1: s} for s in subs]

        def power(i: int, k: int) -> Poly:
            cache = powers[i]
            if k not in cache:
                cache[k] = power(i, k - 1) * subs[i]
            return cache[k]

        out = Poly(target)
        for exp, c in self.terms.items():
            term = Poly.constant(c, target)
            for i, k in enumerate(exp):
                if k:
                    term = term * power(i, k)
            out = out + term
        return out

    def linear_substitution(self, matrix: Sequence[Sequence[Fraction]]) -> "Poly":
        """p(A x): variable i becomes sum_j A[i][j] x_j."""
        n = self.nvars
        subs = [Poly(n, {tuple(int(j == k) for k in range(n)): a for j, a in enumerate(row)})
                for row in matrix]
        return self.compose(subs)

    # -- printing -----------------------------------------------------------

    def to_string(self, var: str = "x") -> str:
        if not self.terms:
            return "0"
        parts = []
        for exp in sorted(self.terms, key=lambda e: (sum(e), tuple(reversed(e))), reverse=True):
            c = self.terms[exp]
            factors = [f"{var}{i + 1}" + (f"^{k}" if k > 1 else "")
                       for i, k in enumerate(exp) if k]
            mag = abs(c)
            if factors and mag == 1:
                body = "*".join(factors)
            else:
                body = "*".join([str(mag)] + factors)
            sign = "-" if c < 0 else "+"
            parts.append((sign, body))
        first_sign, first = parts[0]
        text = ("-" if first_sign == "-" else "") + first
        for sign, body in parts[1:]:
            text += f" {sign} {body}"
        return text

    def __str__(self):
        return self.to_string()

    def __repr__(self):
        return f"Poly({self.nvars}, {self.to_string()!r})"


def eval_poly(p: Poly, point: Sequence) -> Fraction:
    if len(point) != p.nvars:
        raise DimensionMismatch(f"point of length {len(point)} for a {p.nvars}-variable polynomial")
    xs = [Fraction(v) for v in point]
    total = Fraction(0)
    for exp, c in p.terms.items():
        term = c
        for x, k in zip(xs, exp):
            if k:
                term *= x**k
        total += term
    return total


# -- parser -------------------------------------------------------------------

_TOKEN = re.compile(r"\s*(?:(\d+)|([A-Za-z_]\w*)|(\*\*|[-+*/^()]))")


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens, pos = [], 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m:
            raise PolySyntaxError(f"unexpected character {text[pos:].lstrip()[:1]!r}", pos)
        start = m.start(m.lastindex)
        if m.group(1) is not None:
            tokens.append(("int", m.group(1), start))
        elif m.group(2) is not None:
            tokens.append(("name", m.group(2), start))
        else:
            op = m.group(3)
            tokens.append(("op", "^" if op == "**" else op, start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, nvars: int, var: str):
        self.tokens = _tokenize(text)
        self.i = 0
        self.nvars = nvars
        self.var_re = re.compile(rf"^{re.escape(var)}(\d+)$")
        self.var = var

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, val, pos = self.take()
        if val != value or kind != "op":
            raise PolySyntaxError(f"expected {value!r}, found {val or 'end of input'!r}", pos)

    def parse(self) -> Poly:
        p = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            raise PolySyntaxError(f"unexpected {val!r}", pos)
        return p

    def expr(self) -> Poly:
        p = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            rhs = self.term()
            p = p + rhs if op == "+" else p - rhs
        return p

    def term(self) -> Poly:
        p = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in ("*", "/"):
            _, op, pos = self.take()
            rhs = self.unary()
            if op == "*":
                p = p * rhs
            else:
                # division only by nonzero constants
                if rhs.degree > 0 or rhs.is_zero():
                    raise PolySyntaxError("division only by a nonzero constant", pos)
                p = p * Poly.constant(1 / rhs.terms[(0,) * self.nvars], self.nvars)
        return p

    def unary(self) -> Poly:
        kind, val, _ = self.peek()
        if kind == "op" and val in "+-":
            self.take()
            p = self.unary()
            return -p if val == "-" else p
        return self.power()

    def power(self) -> Poly:
        base = self.atom()
        if self.peek()[:2] == ("op", "^"):
            self.take()
            kind, val, pos = self.take()
            if kind != "int":
                raise PolySyntaxError("exponent must be a nonnegative integer literal", pos)
            return base ** int(val)
        return base

    def atom(self) -> Poly:
        kind, val, pos = self.take()
        if kind == "int":
            return Poly.constant(int(val), self.nvars)
        if kind == "name":
            m = self.var_re.match(val)
            if not m:
                raise UnknownVariable(f"unknown identifier {val!r} at position {pos}")
            idx = int(m.group(1))
            if not 1 <= idx <= self.nvars:
                raise UnknownVariable(
                    f"variable {val!r} at position {pos} outside {self.var}1..{self.var}{self.nvars}")
            return Poly.variable(idx - 1, self.nvars)
        if kind == "op" and val == "(":
            p = self.expr()
            self.expect(")")
            return p
        raise PolySyntaxError(f"unexpected {val or 'end of input'!r}", pos)


def parse_poly(text: str, m: int, var: str = "x") -> Poly:
    """Parse ``text`` over variables ``{var}1..{var}m`` into expanded form."""
    if m < 0:
        raise ValueError("m must be nonnegative")
    return _Parser(text, m, var).parse()


def poly_product(polys: Iterable[Poly], nvars: int) -> Poly:
    out = Poly.constant(1, nvars)
    for p in polys:
        out = out * p
    return out
