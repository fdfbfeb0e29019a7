from fractions import Fraction

import numpy as np
import pytest

from invmaxent.errors import DimensionMismatch, SignatureCollision
from invmaxent.group import LatticeSpace, build_action, microimage_space, sign_inversion_group, trivial_group
from invmaxent.invariants import (
    check_invariance,
    coordinate_generators,
    generators_from_strings,
    load_generators,
    orbit_indicator,
    orbit_signature,
    sign_inversion_generators,
)
from invmaxent.polynomial import Poly, parse_poly


def test_microimage_generators(gens, group):
    assert gens.N == 5 and gens.m == 4
    assert gens.relation_holds()
    assert all(check_invariance(p, group) for p in gens.polys)


def test_relation_vanishes_at_random_integer_points(gens):
    rng = np.random.default_rng(0)
    for x in rng.integers(-10, 11, size=(1000, 4)):
        vals = [p(tuple(int(v) for v in x)) for p in gens.polys]
        assert gens.relation(vals) == 0


def test_check_invariance_examples(group):
    assert not check_invariance(parse_poly("x1", 4), group)
    assert check_invariance(Poly.constant(1, 4), group)
    with pytest.raises(DimensionMismatch):
        check_invariance(parse_poly("x1", 2), group)


def test_sign_inversion_generators():
    assert sign_inversion_generators(1).polys == (parse_poly("x1^2", 1),)
    g3 = sign_inversion_generators(3)
    assert g3.polys == tuple(parse_poly(f"x{i}^2", 3) for i in (1, 2, 3))
    assert all(check_invariance(p, sign_inversion_group(3)) for p in g3.polys)


def test_separating_on_L2_and_L4(gens, group):
    for L in (2, 4):
        action = build_action(group, microimage_space(L))
        sigs = orbit_signature(gens, action)
        assert len(set(sigs.values())) == action.orbits.M


def test_trivial_group_coordinates_separate(space4):
    action = build_action(trivial_group(4), space4)
    assert len(orbit_signature(coordinate_generators(4), action)) == 256


def test_sign_inversion_single_orbit():
    action = build_action(sign_inversion_group(1), LatticeSpace.grid([-1, 1], 1))
    assert orbit_signature(sign_inversion_generators(1), action) == {0: (Fraction(1, 4),)}


def test_collision_detected(group, action4):
    weak = generators_from_strings(["x1^2 + x2^2 + x3^2 + x4^2"], 4)
    with pytest.raises(SignatureCollision):
        orbit_signature(weak, action4)


def test_indicators_sum_to_one(gens, action4):
    sigs = orbit_signature(gens, action4)
    total = sum(orbit_indicator(o, gens, action4, sigs) for o in range(3))
    for o in range(3, action4.orbits.M):
        total = total + orbit_indicator(o, gens, action4, sigs)
    assert all(v == 1 for v in total)


def test_load_generators(tmp_path):
    assert load_generators("microimage").N == 5
    assert load_generators("sign_inversion", m=2).N == 2
    path = tmp_path / "gens.json"
    path.write_text('{"m": 2, "generators": ["x1 + x2", "x1*x2"], "relation_q": "0"}')
    assert load_generators(str(path)).N == 2
