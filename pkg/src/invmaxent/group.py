"""Finite matrix groups acting on finite lattices.

Group matrices are kept as exact rationals. Lattice coordinates are stored as
integers in doubled units (value * 2), so half-integer intensity levels such
as -3/2 stay exact and the action can be tabulated as integer permutations.
"""

from __future__ import annotations

import itertools
import json
import re
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from math import lcm
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    NonInvertibleGenerator,
    OddL,
    OrderBoundExceeded,
    SpaceMismatch,
    SpaceNotInvariant,
    ValidationError,
)

Matrix = tuple[tuple[Fraction, ...], ...]
DEFAULT_MAX_ORDER = 10000


def _as_matrix(rows: Iterable[Iterable]) -> Matrix:
    mat = tuple(tuple(_as_fraction(v) for v in row) for row in rows)
    if not mat or any(len(row) != len(mat) for row in mat):
        raise DimensionMismatch(f"matrix is not square: {[len(r) for r in mat]}")
    return mat


def _as_fraction(v) -> Fraction:
    if isinstance(v, str):
        return Fraction(v.strip())
    if isinstance(v, float) and not v.is_integer():
        raise ValidationError(f"non-integer float {v!r}; give rationals as 'p/q'")
    return Fraction(v)


def _matmul(a: Matrix, b: Matrix) -> Matrix:
    n = len(a)
    return tuple(
        tuple(sum((a[i][k] * b[k][j] for k in range(n)), Fraction(0)) for j in range(n))
        for i in range(n))


def _identity(m: int) -> Matrix:
    return tuple(tuple(Fraction(int(i == j)) for j in range(m)) for i in range(m))


def _det_and_inverse(a: Matrix) -> tuple[Fraction, Matrix | None]:
    """Gauss-Jordan over Q; returns (det, inverse or None when singular)."""
    n = len(a)
    work = [list(row) + list(e) for row, e in zip(a, _identity(n))]
    det = Fraction(1)
    for col in range(n):
        pivot = next((r for r in range(col, n) if work[r][col] != 0), None)
        if pivot is None:
            return Fraction(0), None
        if pivot != col:
            work[col], work[pivot] = work[pivot], work[col]
            det = -det
        pv = work[col][col]
        det *= pv
        work[col] = [v / pv for v in work[col]]
        for r in range(n):
            if r != col and work[r][col] != 0:
                factor = work[r][col]
                work[r] = [x - factor * y for x, y in zip(work[r], work[col])]
    return det, tuple(tuple(row[n:]) for row in work)


@dataclass(frozen=True)
class GroupElement:
    """An invertible m x m rational matrix, optionally labelled by a word."""

    matrix: Matrix
    label: str = field(default="", compare=False)

    @classmethod
    def from_rows(cls, rows, label: str = "") -> "GroupElement":
        return cls(_as_matrix(rows), label)

    @property
    def dim(self) -> int:
        return len(self.matrix)

    def __matmul__(self, other: "GroupElement") -> "GroupElement":
        if other.dim != self.dim:
            raise DimensionMismatch(f"cannot multiply {self.dim}x{self.dim} by {other.dim}x{other.dim}")
        return GroupElement(_matmul(self.matrix, other.matrix), self.label + other.label)

    def det(self) -> Fraction:
        return _det_and_inverse(self.matrix)[0]

    def inverse(self) -> "GroupElement":
        det, inv = _det_and_inverse(self.matrix)
        if inv is None:
            raise NonInvertibleGenerator(f"singular matrix {self.label or self.matrix}")
        return GroupElement(inv, f"({self.label})^-1" if self.label else "")

    def is_identity(self) -> bool:
        return self.matrix == _identity(self.dim)

    def integer_form(self) -> tuple[np.ndarray, int]:
        """(N, den) with matrix == N / den and N integral."""
        den = lcm(*(v.denominator for row in self.matrix for v in row))
        num = np.array([[int(v * den) for v in row] for row in self.matrix], dtype=np.int64)
        return num, den

    def __repr__(self) -> str:
        return f"GroupElement({self.label or 'e'})"


def identity_element(m: int) -> GroupElement:
    return GroupElement(_identity(m), "")


@dataclass(frozen=True)
class GroupSpec:
    dimension: int
    generators: tuple[GroupElement, ...]
    elements: tuple[GroupElement, ...]

    @property
    def order(self) -> int:
        return len(self.elements)

    def index(self, g: GroupElement) -> int:
        return self.elements.index(g)


def close_group(generators: Sequence[GroupElement], max_order: int = DEFAULT_MAX_ORDER) -> GroupSpec:
    """Breadth-first closure of ``generators`` under multiplication.

    Elements are listed identity first, then in BFS discovery order, so the
    element list is reproducible for a given generator list.
    """
    generators = tuple(generators)
    if not generators:
        raise ValidationError("at least one generator is required")
    m = generators[0].dim
    for g in generators:
        if g.dim != m:
            raise DimensionMismatch(f"generator {g.label!r} has dimension {g.dim}, expected {m}")
        if g.det() == 0:
            raise NonInvertibleGenerator(f"generator {g.label or g.matrix} is singular")

    ident = identity_element(m)
    seen = {ident: ident}
    order = [ident]
    queue = deque([ident])
    while queue:
        h = queue.popleft()
        for g in generators:
            gh = g @ h
            if gh not in seen:
                if len(order) >= max_order:
                    raise OrderBoundExceeded(
                        f"closure exceeds {max_order} elements; group is infinite or too large")
                seen[gh] = gh
                order.append(gh)
                queue.append(gh)
    for g in order:
        if abs(g.det()) != 1:
            raise NonInvertibleGenerator(f"element {g.label} has det {g.det()}, not +-1")
    return GroupSpec(dimension=m, generators=generators, elements=tuple(order))


def act_point(g: GroupElement, x: Sequence) -> tuple[Fraction, ...]:
    if len(x) != g.dim:
        raise DimensionMismatch(f"point of length {len(x)} for a {g.dim}-dimensional group")
    xs = [Fraction(v) for v in x]
    return tuple(sum((a * b for a, b in zip(row, xs)), Fraction(0)) for row in g.matrix)


# -- built-in groups -----------------------------------------------------------

def microimage_group() -> GroupSpec:
    """Symmetries of the 2x2 microimage square: rotation, diagonal flip, inversion."""
    g_r = GroupElement.from_rows(
        [[0, 0, 0, 1], [1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0]], "r")
    g_s = GroupElement.from_rows(
        [[1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0], [0, 1, 0, 0]], "s")
    g_i = GroupElement.from_rows(
        [[-1 if i == j else 0 for j in range(4)] for i in range(4)], "i")
    return close_group([g_r, g_s, g_i])


def sign_inversion_group(m: int) -> GroupSpec:
    if m < 1:
        raise ValidationError("m must be positive")
    gens = []
    for i in range(m):
        rows = [[(-1 if j == i else 1) if j == k else 0 for k in range(m)] for j in range(m)]
        gens.append(GroupElement.from_rows(rows, f"t{i + 1}"))
    return close_group(gens)


def trivial_group(m: int) -> GroupSpec:
    return close_group([identity_element(m)])


_NAMED = re.compile(r"^\s*(\w+)\s*(?:\(\s*(\d+)\s*\))?\s*$")


def named_group(name: str, m: int | None = None) -> GroupSpec:
    """Resolve ``microimage``, ``trivial``, ``trivial(m)`` or ``sign_inversion(m)``."""
    match = _NAMED.match(name)
    if not match:
        raise ValidationError(f"unknown group {name!r}")
    kind, arg = match.group(1), match.group(2)
    dim = int(arg) if arg is not None else m
    if kind == "microimage":
        if dim not in (None, 4):
            raise DimensionMismatch("the microimage group acts on R^4")
        return microimage_group()
    if kind in ("trivial", "sign_inversion"):
        if dim is None:
            raise ValidationError(f"group {kind!r} needs a dimension, e.g. {kind}(4)")
        return trivial_group(dim) if kind == "trivial" else sign_inversion_group(dim)
    raise ValidationError(f"unknown group {name!r}")


def group_from_json(data: dict, max_order: int = DEFAULT_MAX_ORDER) -> GroupSpec:
    try:
        m = int(data["dimension"])
        raw = data["generators"]
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"group spec needs 'dimension' and 'generators': {exc}") from None
    names = data.get("names") or [f"g{i + 1}" for i in range(len(raw))]
    if len(names) != len(raw):
        raise ValidationError("'names' must match 'generators' in length")
    gens = [GroupElement.from_rows(rows, str(nm)) for rows, nm in zip(raw, names)]
    for g in gens:
        if g.dim != m:
            raise DimensionMismatch(f"generator {g.label} is {g.dim}x{g.dim}, expected {m}x{m}")
    return close_group(gens, max_order=max_order)


def load_group(spec: str, m: int | None = None, max_order: int = DEFAULT_MAX_ORDER) -> GroupSpec:
    """A builtin name or a path to a JSON group spec."""
    path = Path(spec)
    if path.suffix == ".json" or path.exists():
        return group_from_json(json.loads(path.read_text()), max_order=max_order)
    return named_group(spec, m)


# -- lattice -------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LatticeSpace:
    """Finite point set with a fixed enumeration, coordinates in doubled units."""

    points2: np.ndarray
    index: dict = field(repr=False)
    levels2: tuple[int, ...] | None = None

    @classmethod
    def from_points(cls, points: Iterable[Sequence]) -> "LatticeSpace":
        doubled = []
        for p in points:
            row = []
            for v in p:
                v2 = Fraction(v) * 2
                if v2.denominator != 1:
                    raise ValidationError(f"coordinate {v} is not an integer or half-integer")
                row.append(int(v2))
            doubled.append(tuple(row))
        return cls._build(doubled, None)

    @classmethod
    def grid(cls, levels2: Sequence[int], m: int) -> "LatticeSpace":
        """Full product grid; first coordinate is the most significant digit."""
        levels2 = tuple(int(v) for v in levels2)
        return cls._build(list(itertools.product(levels2, repeat=m)), levels2)

    @classmethod
    def _build(cls, doubled: list[tuple[int, ...]], levels2) -> "LatticeSpace":
        if not doubled:
            raise ValidationError("lattice must contain at least one point")
        m = len(doubled[0])
        if any(len(p) != m for p in doubled):
            raise DimensionMismatch("lattice points have inconsistent dimensions")
        index = {p: k for k, p in enumerate(doubled)}
        if len(index) != len(doubled):
            raise ValidationError("lattice points must be distinct")
        arr = np.array(doubled, dtype=np.int64).reshape(len(doubled), m)
        arr.setflags(write=False)
        return cls(arr, index, levels2)

    @property
    def K(self) -> int:
        return self.points2.shape[0]

    @property
    def m(self) -> int:
        return self.points2.shape[1]

    def point(self, k: int) -> tuple[Fraction, ...]:
        return tuple(Fraction(int(v), 2) for v in self.points2[k])

    def coords(self) -> np.ndarray:
        return self.points2 / 2.0

    def index_of(self, x: Sequence) -> int:
        key = tuple(int(Fraction(v) * 2) for v in x)
        return self.index[key]

    def same_as(self, other: "LatticeSpace") -> bool:
        return self is other or (
            self.points2.shape == other.points2.shape
            and bool(np.array_equal(self.points2, other.points2)))


def microimage_space(L: int, n: int = 2) -> LatticeSpace:
    """Omega_n^L: intensity levels 0..L-1 shifted down by (L-1)/2, n*n pixels."""
    if L < 2 or n < 1:
        raise ValidationError("need L >= 2 and n >= 1")
    return LatticeSpace.grid([2 * lv - (L - 1) for lv in range(L)], n * n)


# -- action and orbits -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class OrbitSpace:
    orbit_of: np.ndarray
    orbits: tuple[tuple[int, ...], ...]

    @property
    def M(self) -> int:
        return len(self.orbits)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(o) for o in self.orbits)

    def size_histogram(self) -> dict[int, int]:
        hist: dict[int, int] = {}
        for s in self.sizes:
            hist[s] = hist.get(s, 0) + 1
        return dict(sorted(hist.items()))


def _find(parent: list[int], i: int) -> int:
    while parent[i] != i:
        parent[i] = parent[parent[i]]
        i = parent[i]
    return i


def _orbits_from_perms(perms: np.ndarray, K: int) -> OrbitSpace:
    parent = list(range(K))
    for perm in perms:
        for k, j in enumerate(perm.tolist()):
            a, b = _find(parent, k), _find(parent, j)
            if a != b:
                # smaller index becomes the root, so the root is the orbit minimum
                if a < b:
                    parent[b] = a
                else:
                    parent[a] = b
    roots = [_find(parent, k) for k in range(K)]
    members: dict[int, list[int]] = {}
    for k, root in enumerate(roots):
        members.setdefault(root, []).append(k)
    ids = sorted(members)
    orbit_of = np.empty(K, dtype=np.int64)
    for oid, root in enumerate(ids):
        orbit_of[members[root]] = oid
    orbit_of.setflags(write=False)
    return OrbitSpace(orbit_of=orbit_of, orbits=tuple(tuple(members[r]) for r in ids))


@dataclass(frozen=True, eq=False)
class GroupAction:
    group: GroupSpec
    space: LatticeSpace
    perms: np.ndarray  # perms[e, k] = index of elements[e] applied to point k
    orbits: OrbitSpace

    @property
    def order(self) -> int:
        return self.group.order

    def reynolds(self, f) -> np.ndarray:
        return reynolds_apply(self, f)

    def symmetrize(self, p) -> np.ndarray:
        return symmetrize_distribution(self, p)


def _image_indices(g: GroupElement, space: LatticeSpace) -> np.ndarray:
    num, den = g.integer_form()
    img = space.points2 @ num.T
    if den != 1:
        bad = np.nonzero(np.any(img % den != 0, axis=1))[0]
        if bad.size:
            raise SpaceNotInvariant(g, space.point(int(bad[0])))
        img //= den
    out = np.empty(space.K, dtype=np.int64)
    index = space.index
    for k, row in enumerate(map(tuple, img.tolist())):
        j = index.get(row)
        if j is None:
            raise SpaceNotInvariant(g, space.point(k))
        out[k] = j
    return out


def build_action(group: GroupSpec, space: LatticeSpace, check_homomorphism: bool = True) -> GroupAction:
    if group.dimension != space.m:
        raise DimensionMismatch(f"group acts on R^{group.dimension}, lattice lives in R^{space.m}")
    perms = np.stack([_image_indices(g, space) for g in group.elements])
    perms.setflags(write=False)
    if check_homomorphism:
        lookup = {g: e for e, g in enumerate(group.elements)}
        for g in group.generators:
            pg = perms[lookup[g]]
            for h_idx, h in enumerate(group.elements):
                if not np.array_equal(perms[lookup[g @ h]], pg[perms[h_idx]]):
                    raise AssertionError(f"permutation table is not a homomorphism at {g}*{h}")
    return GroupAction(group, space, perms, _orbits_from_perms(perms, space.K))


def _check_vector(action: GroupAction, f) -> np.ndarray:
    arr = np.asarray(f)
    if arr.ndim != 1 or arr.shape[0] != action.space.K:
        raise SpaceMismatch(f"vector of shape {arr.shape} on a space with K={action.space.K}")
    return arr


def reynolds_apply(action: GroupAction, f) -> np.ndarray:
    """(1/|G|) sum_g g.f; exact when ``f`` holds Fractions (object dtype)."""
    arr = _check_vector(action, f)
    stacked = arr[action.perms]
    if arr.dtype == object:
        return np.array([sum(col, Fraction(0)) / action.order for col in stacked.T], dtype=object)
    return stacked.mean(axis=0)


def check_distribution(p, K: int | None = None, atol: float = 1e-12) -> np.ndarray:
    arr = np.asarray(p, dtype=float)
    if arr.ndim != 1 or (K is not None and arr.shape[0] != K):
        raise SpaceMismatch(f"distribution of shape {arr.shape}, expected ({K},)")
    if np.any(arr < 0) or not np.isfinite(arr).all():
        raise ValidationError("distribution has negative or non-finite entries")
    if abs(arr.sum() - 1.0) > atol:
        raise ValidationError(f"distribution sums to {arr.sum():.17g}, not 1")
    return arr


def symmetrize_distribution(action: GroupAction, p) -> np.ndarray:
    arr = check_distribution(p, action.space.K)
    return arr[action.perms].mean(axis=0)


# -- orbit counting ---------------------------------------------------------------

@dataclass(frozen=True)
class OrbitCounts:
    total: int
    by_size: dict[int, int]


def orbit_count_formula(L: int) -> OrbitCounts:
    """Closed-form orbit counts of the microimage group on Omega_2^L, L even."""
    if L < 2 or L % 2:
        raise OddL(f"formula requires an even L >= 2, got {L}")
    total = Fraction(L**4 + 2 * L**3 + 6 * L**2 + 4 * L, 16)
    n8 = Fraction(2 * L**3 + 3 * L**2 - 10 * L, 8)
    n16 = Fraction(L**4 - 2 * L**3 - 4 * L**2 + 8 * L, 16)
    by_size = {2: L, 4: L * L // 4, 8: int(n8), 16: int(n16)}
    return OrbitCounts(total=int(total), by_size=by_size)
