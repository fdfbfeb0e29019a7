"""Graded lexicographic ordering of multi-indices, distances and shells.

Within a degree, alpha < beta iff the highest-precedence variable on which
they differ has the larger exponent in beta ("rightmost non-zero entry of
beta - alpha is positive" with the default precedence x1 < x2 < ... < xN).

Every multi-index has a rank, its position in the enumeration 0, x1, x2, ...
The discrete distance between two indices is then the difference of ranks,
and shells are unions of rank intervals.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb
from typing import Iterable, Iterator, Sequence

from .errors import EmptyA, LengthMismatch, ValidationError

MultiIndex = tuple[int, ...]

LITERAL = "literal-shell"
SUCCEEDING = "succeeding-only"
POLICIES = (LITERAL, SUCCEEDING)


def _compositions(total: int, parts: int) -> int:
    if parts == 0:
        return 1 if total == 0 else 0
    return comb(total + parts - 1, parts - 1)


@dataclass(frozen=True)
class GradedLex:
    nvars: int
    precedence: tuple[int, ...] | None = None  # lowest to highest; default identity

    def __post_init__(self):
        if self.nvars < 1:
            raise ValidationError("need at least one variable")
        if self.precedence is not None and sorted(self.precedence) != list(range(self.nvars)):
            raise ValidationError(f"precedence {self.precedence} is not a permutation of 0..{self.nvars - 1}")

    @property
    def _prec(self) -> tuple[int, ...]:
        return self.precedence if self.precedence is not None else tuple(range(self.nvars))

    def _check(self, alpha: Sequence[int]) -> MultiIndex:
        alpha = tuple(int(a) for a in alpha)
        if len(alpha) != self.nvars:
            raise LengthMismatch(f"multi-index {alpha} has length {len(alpha)}, expected {self.nvars}")
        if any(a < 0 for a in alpha):
            raise ValidationError(f"negative exponent in {alpha}")
        return alpha

    def _digits(self, alpha: MultiIndex) -> list[int]:
        # most significant first
        return [alpha[p] for p in reversed(self._prec)]

    def key(self, alpha: Sequence[int]) -> tuple:
        alpha = self._check(alpha)
        return (sum(alpha), tuple(self._digits(alpha)))

    def rank(self, alpha: Sequence[int]) -> int:
        alpha = self._check(alpha)
        n, deg = self.nvars, sum(alpha)
        below = comb(deg + n - 1, n)
        rem, within = deg, 0
        digits = self._digits(alpha)
        for i, r in enumerate(digits[:-1]):
            parts = n - 1 - i
            within += sum(_compositions(rem - v, parts) for v in range(r))
            rem -= r
        return below + within

    def unrank(self, rank: int) -> MultiIndex:
        if rank < 0:
            raise ValidationError("rank must be nonnegative")
        n = self.nvars
        deg = 0
        while comb(deg + 1 + n - 1, n) <= rank:
            deg += 1
        within = rank - comb(deg + n - 1, n)
        digits, rem = [], deg
        for i in range(n - 1):
            parts = n - 1 - i
            v = 0
            while True:
                block = _compositions(rem - v, parts)
                if within < block:
                    break
                within -= block
                v += 1
            digits.append(v)
            rem -= v
        digits.append(rem)
        alpha = [0] * n
        for p, v in zip(reversed(self._prec), digits):
            alpha[p] = v
        return tuple(alpha)

    def compare(self, alpha: Sequence[int], beta: Sequence[int]) -> int:
        """-1, 0 or 1 as alpha is less than, equal to or greater than beta."""
        ka, kb = self.key(alpha), self.key(beta)
        return (ka > kb) - (ka < kb)


def compare(order: GradedLex, alpha, beta) -> int:
    return order.compare(alpha, beta)


def iter_monomials(order: GradedLex, start_after: Sequence[int] | None = None) -> Iterator[MultiIndex]:
    r = 0 if start_after is None else order.rank(start_after) + 1
    while True:
        yield order.unrank(r)
        r += 1


def enumerate_monomials(order: GradedLex, start_after: Sequence[int] | None, count: int) -> list[MultiIndex]:
    if count < 0:
        raise ValidationError("count must be nonnegative")
    it = iter_monomials(order, start_after)
    return [next(it) for _ in range(count)]


def d_distance(order: GradedLex, alpha, beta) -> int:
    return abs(order.rank(alpha) - order.rank(beta))


def shell_ranks(order: GradedLex, A: Iterable[Sequence[int]], d: int, policy: str = LITERAL) -> list[int]:
    return shell_from_ranks(sorted({order.rank(a) for a in A}), d, policy)


def shell_from_ranks(ranks: Sequence[int], d: int, policy: str = LITERAL) -> list[int]:
    """Shell around the indices with the given (sorted, distinct) ranks."""
    if not ranks:
        raise EmptyA("shell needs a nonempty index set")
    if d < 0:
        raise ValidationError("shell depth must be nonnegative")
    if policy == SUCCEEDING:
        top = ranks[-1]
        return list(range(top + 1, top + d + 1))
    if policy != LITERAL:
        raise ValidationError(f"unknown candidate policy {policy!r}")
    out: set[int] = set()
    for r in ranks:
        out.update(range(max(0, r - d), r + d + 1))
    return sorted(out)


def shell(order: GradedLex, A: Iterable[Sequence[int]], d: int, policy: str = LITERAL) -> list[MultiIndex]:
    """Indices within ``d`` of ``A``, in increasing order.

    The literal shell contains ``A`` itself; under ``succeeding-only`` only
    indices above max(A) are returned.
    """
    return [order.unrank(r) for r in shell_ranks(order, A, d, policy)]
