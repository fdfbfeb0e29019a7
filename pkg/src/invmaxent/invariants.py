"""Invariant generator sets, invariance certificates, orbit signatures.

A :class:`GeneratorSet` is a list of polynomials f_1..f_N in x_1..x_m,
optionally with one polynomial relation q(y_1..y_N) satisfied by them. The
ordinary pool (plain coordinates) is the generator set of the trivial group.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, SignatureCollision, ValidationError, VerificationError
from .group import GroupAction, GroupSpec, LatticeSpace, microimage_group
from .polynomial import Poly, parse_poly

MICROIMAGE_GENERATORS = (
    "(x1 + x3)*(x2 + x4)",
    "x1*x3 + x2*x4",
    "x1^2 + x2^2 + x3^2 + x4^2",
    "x1*x2*x3*x4",
    "(x1^2 + x3^2)*(x2^2 + x4^2)",
)
# The relation as usually written; its y1..y5 stand for f2, f4, f5, f1, f3
# (it is weighted-homogeneous of degree 8 only under that assignment).
MICROIMAGE_RELATION_PRINTED = (
    "4*y1^2*y3 + 8*y1*y2*y5 + 2*y1*y3*y5 - 2*y1*y4^2*y5 + 16*y2^2 - 8*y2*y3"
    " - 8*y2*y4^2 + 4*y2*y5^2 + y3^2 - 2*y3*y4^2 + y4^4"
)
MICROIMAGE_RELATION_VARIABLES = (2, 4, 5, 1, 3)


@dataclass(frozen=True, eq=False)
class GeneratorSet:
    polys: tuple[Poly, ...]
    relation: Poly | None = None
    names: tuple[str, ...] = field(default=())
    symbol: str = "f"

    def __post_init__(self):
        if not self.polys:
            raise ValidationError("a generator set needs at least one polynomial")
        m = self.polys[0].nvars
        if any(p.nvars != m for p in self.polys):
            raise DimensionMismatch("generators live in different polynomial rings")
        if self.relation is not None and self.relation.nvars != len(self.polys):
            raise DimensionMismatch(
                f"relation has {self.relation.nvars} variables for {len(self.polys)} generators")
        if not self.names:
            object.__setattr__(self, "names",
                               tuple(f"{self.symbol}{i + 1}" for i in range(len(self.polys))))

    @property
    def N(self) -> int:
        return len(self.polys)

    @property
    def m(self) -> int:
        return self.polys[0].nvars

    def relation_composed(self) -> Poly | None:
        """q(f_1, ..., f_N) expanded in x; the zero polynomial when q is a relation."""
        if self.relation is None:
            return None
        return self.relation.compose(list(self.polys))

    def relation_holds(self) -> bool:
        composed = self.relation_composed()
        return composed is None or composed.is_zero()

    def signature(self, point) -> tuple[Fraction, ...]:
        return tuple(p(point) for p in self.polys)

    def to_json(self) -> dict:
        out = {"m": self.m, "generators": [p.to_string() for p in self.polys]}
        if self.relation is not None:
            out["relation_q"] = self.relation.to_string("y")
        return out


def check_invariance(p: Poly, group: GroupSpec) -> bool:
    """True iff p(g^-1 x) == p(x) for every generator g of ``group``."""
    if p.nvars != group.dimension:
        raise DimensionMismatch(f"{p.nvars}-variable polynomial, group acts on R^{group.dimension}")
    return all(p.linear_substitution(g.inverse().matrix) == p for g in group.generators)


def generators_from_strings(exprs, m: int, relation: str | None = None, symbol: str = "f") -> GeneratorSet:
    polys = tuple(parse_poly(e, m) for e in exprs)
    rel = parse_poly(relation, len(polys), var="y") if relation else None
    return GeneratorSet(polys, rel, symbol=symbol)


@lru_cache(maxsize=None)
def microimage_generators() -> GeneratorSet:
    """The five fundamental invariants of the microimage group, with their relation."""
    printed = parse_poly(MICROIMAGE_RELATION_PRINTED, 5, var="y")
    relabel = [Poly.variable(j - 1, 5) for j in MICROIMAGE_RELATION_VARIABLES]
    gens = GeneratorSet(tuple(parse_poly(e, 4) for e in MICROIMAGE_GENERATORS),
                        printed.compose(relabel))
    group = microimage_group()
    for name, p in zip(gens.names, gens.polys):
        if not check_invariance(p, group):
            raise VerificationError(f"{name} is not invariant")
    if not gens.relation_holds():
        raise VerificationError("q(f1..f5) does not vanish")
    return gens


def sign_inversion_generators(m: int) -> GeneratorSet:
    if m < 1:
        raise ValidationError("m must be positive")
    return GeneratorSet(tuple(Poly.variable(i, m) ** 2 for i in range(m)))


def coordinate_generators(m: int) -> GeneratorSet:
    """x_1..x_m: generators for the trivial group, i.e. the ordinary pool."""
    return GeneratorSet(tuple(Poly.variable(i, m) for i in range(m)), symbol="x")


def generators_from_json(data: dict) -> GeneratorSet:
    try:
        m = int(data["m"])
        exprs = list(data["generators"])
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"generator file needs 'm' and 'generators': {exc}") from None
    return generators_from_strings(exprs, m, data.get("relation_q"))


def load_generators(spec: str, m: int | None = None) -> GeneratorSet:
    """Builtin name (``microimage``, ``sign_inversion``, ``coordinates``) or JSON path."""
    if spec == "microimage":
        return microimage_generators()
    if spec in ("sign_inversion", "coordinates"):
        if m is None:
            raise ValidationError(f"{spec} generators need a dimension")
        return sign_inversion_generators(m) if spec == "sign_inversion" else coordinate_generators(m)
    path = Path(spec)
    if not path.exists():
        raise ValidationError(f"no builtin generator set or file named {spec!r}")
    return generators_from_json(json.loads(path.read_text()))


def generator_values(gens: GeneratorSet, space: LatticeSpace) -> np.ndarray:
    """K x N object array of exact generator values at each lattice point."""
    if gens.m != space.m:
        raise DimensionMismatch(f"generators in {gens.m} variables, lattice in R^{space.m}")
    out = np.empty((space.K, gens.N), dtype=object)
    for k in range(space.K):
        out[k] = gens.signature(space.point(k))
    return out


def orbit_signature(gens: GeneratorSet, action: GroupAction) -> dict[int, tuple[Fraction, ...]]:
    """Generator values on each orbit; raises if two orbits share a signature."""
    values = generator_values(gens, action.space)
    sigs: dict[int, tuple[Fraction, ...]] = {}
    owner: dict[tuple, int] = {}
    for oid, members in enumerate(action.orbits.orbits):
        sig = tuple(values[members[0]])
        for k in members[1:]:
            if tuple(values[k]) != sig:
                raise VerificationError(f"generators are not constant on orbit {oid}")
        if sig in owner:
            raise SignatureCollision(owner[sig], oid)
        owner[sig] = oid
        sigs[oid] = sig
    return sigs


def orbit_indicator(orbit_id: int, gens: GeneratorSet, action: GroupAction,
                    signatures: dict[int, tuple] | None = None) -> np.ndarray:
    """Exact values of the invariant polynomial that is 1 on one orbit and 0 on the rest.

    h(x) = prod over the other orbits O' of sum_i (f_i(x) - f_i(O'))^2,
    normalized by its value on the chosen orbit.
    """
    sigs = signatures if signatures is not None else orbit_signature(gens, action)
    if orbit_id not in sigs:
        raise ValidationError(f"no orbit {orbit_id}")
    others = [s for oid, s in sigs.items() if oid != orbit_id]

    def h(sig) -> Fraction:
        out = Fraction(1)
        for s in others:
            out *= sum(((a - b) ** 2 for a, b in zip(sig, s)), Fraction(0))
        return out

    norm = h(sigs[orbit_id])
    values = generator_values(gens, action.space)
    return np.array([h(tuple(values[k])) / norm for k in range(action.space.K)], dtype=object)
