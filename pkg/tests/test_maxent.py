import numpy as np
import pytest

from invmaxent.errors import AbsoluteContinuityViolation, NotRealizable, RankDeficient, ShapeMismatch
from invmaxent.maxent import (
    ConstraintSet,
    entropy,
    kl,
    loglik_gradient,
    loglik_gradient_check,
    model_from_lambda,
    moments,
    solve_maxent,
)
from invmaxent.ordering import enumerate_monomials

from conftest import random_simplex

ZERO = (0,) * 5


def _basis(pools, n):
    """First n invariant indices that are independent over the lattice."""
    from invmaxent.features import SpanTracker

    tracker, out = SpanTracker(pools), []
    pool = pools["invariant"]
    for a in enumerate_monomials(pool.order, None, 400):
        if tracker.add(("invariant", a)):
            out.append(a)
        if len(out) == n:
            return out
    raise AssertionError("basis too small")


def _cs(pools, A, p):
    F = np.column_stack([pools["invariant"].values(a) for a in A])
    return ConstraintSet.from_distribution(A, F, p)


def test_entropy_examples():
    assert entropy(np.full(256, 1 / 256)) == pytest.approx(np.log(256))
    assert entropy(np.eye(4)[0]) == 0.0
    assert entropy([0.5, 0.5, 0, 0]) == pytest.approx(np.log(2))


def test_kl_examples():
    p = random_simplex(np.random.default_rng(0), 10)
    assert kl(p, p) == pytest.approx(0.0, abs=1e-15)
    assert kl(np.eye(8)[2], np.full(8, 1 / 8)) == pytest.approx(np.log(8))
    with pytest.raises(AbsoluteContinuityViolation):
        kl([0.5, 0.5], [1.0, 0.0])


def test_moments(inv_pools, action4):
    pool = inv_pools["invariant"]
    F = np.column_stack([pool.values(ZERO), pool.values((0, 0, 1, 0, 0))])
    assert moments(np.full(256, 1 / 256), F) == pytest.approx([1.0, 5.0])
    p = random_simplex(np.random.default_rng(3), 256)
    assert np.allclose(moments(p, F), moments(action4.symmetrize(p), F))
    with pytest.raises(ShapeMismatch):
        moments(np.ones(3) / 3, F)


def test_constant_only_is_uniform(inv_pools):
    p = random_simplex(np.random.default_rng(1), 256)
    model, rep = solve_maxent(_cs(inv_pools, [ZERO], p))
    assert np.allclose(model.density, 1 / 256)
    assert model.psi == pytest.approx(np.log(256))


def test_full_basis_recovers_symmetrized_target(inv_pools, action4):
    p = random_simplex(np.random.default_rng(2), 256, floor=1e-3)
    model, rep = solve_maxent(_cs(inv_pools, _basis(inv_pools, 31), p))
    assert np.max(np.abs(model.density - action4.symmetrize(p))) < 1e-10
    assert rep.residual_inf <= 1e-10


def test_known_lambda_recovered(inv_pools):
    A = _basis(inv_pools, 6)
    F = np.column_stack([inv_pools["invariant"].values(a) for a in A])
    lam = np.array([0.0, 0.3, -0.1, 0.05, 0.02, -0.2]) / np.maximum(1, F.std(axis=0))
    truth = model_from_lambda(ConstraintSet(tuple(A), F, moments(np.full(256, 1 / 256), F)), lam)
    model, _ = solve_maxent(ConstraintSet(tuple(A), F, moments(truth.density, F)))
    assert np.max(np.abs(model.lam[1:] - lam[1:])) < 1e-6
    assert np.max(np.abs(model.density - truth.density)) < 1e-8
    assert np.allclose(model.log_density(), np.log(model.density))


def test_objective_decreases(inv_pools):
    p = random_simplex(np.random.default_rng(4), 256, floor=1e-3)
    _, rep = solve_maxent(_cs(inv_pools, _basis(inv_pools, 12), p))
    trace = np.array(rep.objective_trace)
    assert np.all(np.diff(trace) <= 1e-12)


def test_rank_deficient(inv_pools):
    dependent = [ZERO, (1, 0, 0, 0, 0), (1, 0, 0, 0, 0)]
    with pytest.raises(RankDeficient):
        solve_maxent(_cs(inv_pools, dependent, np.full(256, 1 / 256)))


def test_boundary_target_not_realizable(inv_pools, action4):
    # all mass on one orbit: matching the full basis needs zeros elsewhere
    p = np.zeros(256)
    p[list(action4.orbits.orbits[5])] = 1.0
    p /= p.sum()
    with pytest.raises(NotRealizable):
        solve_maxent(_cs(inv_pools, _basis(inv_pools, 31), p))


def test_warm_start_gives_same_answer(inv_pools):
    p = random_simplex(np.random.default_rng(5), 256, floor=1e-3)
    cs = _cs(inv_pools, _basis(inv_pools, 8), p)
    cold, _ = solve_maxent(cs)
    warm, rep = solve_maxent(cs, init=cold.lam)
    assert rep.iterations <= 1
    assert np.max(np.abs(cold.density - warm.density)) < 1e-12


def test_entropy_decreases_with_constraints(inv_pools):
    p = random_simplex(np.random.default_rng(6), 256, floor=1e-3)
    basis = _basis(inv_pools, 10)
    H = [solve_maxent(_cs(inv_pools, basis[:n], p))[1].entropy for n in range(1, 11)]
    assert all(b < a for a, b in zip(H, H[1:]))


def test_loglik_gradient(inv_pools):
    rng = np.random.default_rng(7)
    counts = rng.multinomial(2000, random_simplex(rng, 256, floor=1e-3))
    cs = _cs(inv_pools, _basis(inv_pools, 5), counts / counts.sum())
    model, _ = solve_maxent(cs)
    assert loglik_gradient_check(model, counts) <= 1e-8 * counts.sum()
    bumped = model_from_lambda(cs, model.lam + np.r_[0, 1e-3, 0, 0, 0])
    assert loglik_gradient_check(bumped, counts) > 1e-3
    uniform, _ = solve_maxent(_cs(inv_pools, [ZERO], np.full(256, 1 / 256)))
    assert np.allclose(loglik_gradient(uniform, np.full(256, 3)), 0.0)
    with pytest.raises(ShapeMismatch):
        loglik_gradient(model, np.ones(5))
