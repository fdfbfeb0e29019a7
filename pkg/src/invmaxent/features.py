"""Monomial feature vectors over a lattice, and exact span bookkeeping.

A feature is f^alpha = f_1^alpha_1 ... f_N^alpha_N evaluated at every lattice
point. Generator values are rational, so after scaling each generator by
the common denominator of its values every feature is an integer vector.
Linear independence is decided by elimination modulo two 21-bit primes:
independence modulo a prime implies independence over Q, and a vector is
declared dependent only when it is dependent modulo both.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from fractions import Fraction
from math import lcm
from typing import Iterable, Sequence

import numpy as np

from .errors import ArityMismatch, DimensionMismatch, ValidationError
from .group import LatticeSpace
from .invariants import GeneratorSet, coordinate_generators, generator_values
from .ordering import GradedLex, MultiIndex

INVARIANT = "invariant"
ORDINARY = "ordinary"
MIXED = "mixed"
PRIMES = (2097143, 2097133)

Term = tuple[str, MultiIndex]


def _powmod(base: np.ndarray, e: int, p: int) -> np.ndarray:
    result = np.ones_like(base)
    b = base.copy()
    while e:
        if e & 1:
            result = (result * b) % p
        e >>= 1
        if e:
            b = (b * b) % p
    return result


@dataclass(frozen=True, eq=False)
class FeatureVector:
    index: MultiIndex
    pool: str
    values: np.ndarray  # float64
    exact: np.ndarray  # object array of Fractions


class FeaturePool:
    """All monomials in one generator set, evaluated on one lattice.

    Evaluations are cached by multi-index; the cache is guarded by a lock so
    candidate scoring may run in threads.
    """

    def __init__(self, tag: str, gens: GeneratorSet, space: LatticeSpace, order: GradedLex | None = None):
        if gens.m != space.m:
            raise DimensionMismatch(f"generators in {gens.m} variables, lattice in R^{space.m}")
        self.tag = tag
        self.gens = gens
        self.space = space
        self.order = order or GradedLex(gens.N)
        if self.order.nvars != gens.N:
            raise ArityMismatch(f"ordering over {self.order.nvars} variables for {gens.N} generators")
        self._exact = generator_values(gens, space)
        self._int = []
        for i in range(gens.N):
            col = self._exact[:, i]
            den = lcm(*(v.denominator for v in col))
            self._int.append([int(v * den) for v in col])
        self._mod = {p: np.array([[v % p for v in col] for col in self._int], dtype=np.int64)
                     for p in PRIMES}
        sigs = [tuple(row) for row in self._exact]
        first: dict[tuple, int] = {}
        self.classes = np.array([first.setdefault(s, len(first)) for s in sigs], dtype=np.int64)
        self.dimension = len(first)
        self._cache: dict[MultiIndex, FeatureVector] = {}
        self._modcache: dict[tuple[MultiIndex, int], np.ndarray] = {}
        self._lock = threading.Lock()

    @classmethod
    def ordinary(cls, space: LatticeSpace) -> "FeaturePool":
        return cls(ORDINARY, coordinate_generators(space.m), space)

    def _check(self, alpha: Sequence[int]) -> MultiIndex:
        alpha = tuple(int(a) for a in alpha)
        if len(alpha) != self.gens.N:
            raise ArityMismatch(f"index {alpha} for a pool of {self.gens.N} generators")
        if any(a < 0 for a in alpha):
            raise ValidationError(f"negative exponent in {alpha}")
        return alpha

    def feature(self, alpha: Sequence[int]) -> FeatureVector:
        alpha = self._check(alpha)
        with self._lock:
            hit = self._cache.get(alpha)
        if hit is not None:
            return hit
        exact = np.empty(self.space.K, dtype=object)
        for k in range(self.space.K):
            v = Fraction(1)
            for g, a in zip(self._exact[k], alpha):
                if a:
                    v *= g**a
            exact[k] = v
        values = np.array([float(v) for v in exact], dtype=float)
        values.setflags(write=False)
        fv = FeatureVector(alpha, self.tag, values, exact)
        with self._lock:
            return self._cache.setdefault(alpha, fv)

    def values(self, alpha: Sequence[int]) -> np.ndarray:
        return self.feature(alpha).values

    def modular(self, alpha: Sequence[int], p: int) -> np.ndarray:
        """An integer multiple of f^alpha, reduced mod p."""
        alpha = self._check(alpha)
        key = (alpha, p)
        hit = self._modcache.get(key)
        if hit is not None:
            return hit
        out = np.ones(self.space.K, dtype=np.int64)
        for col, a in zip(self._mod[p], alpha):
            if a:
                out = (out * _powmod(col, a, p)) % p
        out.setflags(write=False)
        with self._lock:
            return self._modcache.setdefault(key, out)

    def project(self, p: np.ndarray) -> np.ndarray:
        """Average of ``p`` over points sharing a generator signature."""
        mass = np.bincount(self.classes, weights=p, minlength=self.dimension)
        size = np.bincount(self.classes, minlength=self.dimension)
        return (mass / size)[self.classes]

    def label(self, alpha: Sequence[int]) -> str:
        parts = []
        for name, a in zip(self.gens.names, alpha):
            if a:
                parts.append(name if a == 1 else f"{name}^{a}")
        return "*".join(parts) or "1"


def eval_feature(alpha: Sequence[int], gens: GeneratorSet, space: LatticeSpace,
                 pool: str = INVARIANT) -> FeatureVector:
    """One-off evaluation; use a :class:`FeaturePool` to reuse results."""
    return FeaturePool(pool, gens, space).feature(alpha)


class _ModBasis:
    """Reduced row-echelon basis over GF(p), stored as exact float64.

    Every stored row has a 1 in its pivot column and zeros in the pivot
    columns of all other rows, so reducing a vector is one matrix product.
    With p < 2^21 a block of 2048 products sums below 2^53, so BLAS does the
    arithmetic exactly.
    """

    BLOCK = 2048

    def __init__(self, p: int, K: int):
        self.p = p
        self.K = K
        self.rows = np.zeros((0, K))
        self.pivots = np.zeros(0, dtype=np.int64)

    def __len__(self) -> int:
        return self.rows.shape[0]

    def reduce(self, v: np.ndarray) -> np.ndarray:
        """Reduce one vector, or each row of a matrix, against the basis."""
        p = self.p
        v = np.mod(np.asarray(v, dtype=float), p)
        coef = v[..., self.pivots]
        for i in range(0, len(self), self.BLOCK):
            c, rows = coef[..., i:i + self.BLOCK], self.rows[i:i + self.BLOCK]
            v = np.mod(v - np.mod(c @ rows, p), p)
        return v

    def add_reduced(self, v: np.ndarray) -> None:
        p = self.p
        j = int(np.flatnonzero(v)[0])
        inv = pow(int(v[j]), -1, p)
        row = np.mod(v * inv, p)  # < 2^42, exact
        # clear the new pivot column from the existing rows
        col = self.rows[:, j].copy()
        self.rows = np.mod(self.rows - np.mod(col[:, None] * row[None, :], p), p)
        self.rows = np.vstack([self.rows, row])
        self.pivots = np.append(self.pivots, j)

    def copy(self) -> "_ModBasis":
        out = _ModBasis(self.p, self.K)
        out.rows, out.pivots = self.rows.copy(), self.pivots.copy()
        return out


class SpanTracker:
    """Exact incremental rank of a growing set of feature vectors."""

    def __init__(self, pools: dict[str, FeaturePool]):
        self.pools = pools
        K = {pool.space.K for pool in pools.values()}
        if len(K) != 1:
            raise DimensionMismatch("pools live on different lattices")
        self.K = K.pop()
        self._bases = [_ModBasis(p, self.K) for p in PRIMES]
        self.terms: list[Term] = []

    @property
    def rank(self) -> int:
        return max(len(b) for b in self._bases)

    def _reduced(self, term: Term) -> list[np.ndarray]:
        tag, alpha = term
        pool = self.pools[tag]
        return [b.reduce(pool.modular(alpha, b.p)) for b in self._bases]

    def is_independent(self, term: Term) -> bool:
        return any(np.any(r) for r in self._reduced(term))

    def independent_mask(self, terms: Sequence[Term]) -> np.ndarray:
        """Vectorized :meth:`is_independent` over many terms."""
        out = np.zeros(len(terms), dtype=bool)
        if not terms:
            return out
        for b in self._bases:
            V = np.stack([self.pools[tag].modular(alpha, b.p) for tag, alpha in terms])
            out |= np.any(b.reduce(V), axis=1)
        return out

    def add(self, term: Term) -> bool:
        """Append ``term``; returns False (and adds nothing) when it is dependent."""
        reduced = self._reduced(term)
        if not any(np.any(r) for r in reduced):
            return False
        for basis, r in zip(self._bases, reduced):
            if np.any(r):
                basis.add_reduced(r)
        self.terms.append(term)
        return True

    def add_vector(self, vec: np.ndarray) -> bool:
        """Add an arbitrary integer vector to the span (not recorded as a term)."""
        vec = np.asarray(vec, dtype=np.int64)
        added = False
        for basis in self._bases:
            r = basis.reduce(vec % basis.p)
            if np.any(r):
                basis.add_reduced(r)
                added = True
        return added

    def copy(self) -> "SpanTracker":
        out = SpanTracker.__new__(SpanTracker)
        out.pools, out.K, out.terms = self.pools, self.K, list(self.terms)
        out._bases = [b.copy() for b in self._bases]
        return out


def span_rank(pools: dict[str, FeaturePool], terms: Iterable[Term]) -> int:
    tracker = SpanTracker(pools)
    for t in terms:
        tracker.add(t)
    return tracker.rank
