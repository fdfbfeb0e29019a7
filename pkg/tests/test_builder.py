import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from invmaxent.builder import (
    EXACT_RECOVERY,
    HALTED_BY_BUDGET,
    HALTED_BY_KL,
    BuilderConfig,
    greedy_build,
    independent_shell,
    make_pools,
    min_depth,
    path_rows,
    stepwise_build,
    verify_halting,
)
from invmaxent.errors import HaltingViolation, InsufficientRank, ValidationError
from invmaxent.features import SpanTracker
from invmaxent.ordering import SUCCEEDING, enumerate_monomials

from conftest import random_simplex

ZERO = (0,) * 5
F1 = (1, 0, 0, 0, 0)
F3 = (0, 0, 1, 0, 0)


def _tracker(pools, alphas, tag="invariant"):
    tr = SpanTracker(pools)
    for a in alphas:
        tr.add((tag, a))
    return tr


def _decreasing(path):
    D = np.array([s.D for s in path.steps])
    H = np.array([s.H for s in path.steps])
    return bool(np.all(np.diff(D) < 1e-12) and np.all(np.diff(H) < 1e-12))


@pytest.fixture(scope="module")
def positive_target():
    return random_simplex(np.random.default_rng(11), 256, floor=1e-3)


def test_config_validation():
    with pytest.raises(ValidationError):
        BuilderConfig(pool="nope")
    with pytest.raises(ValidationError):
        BuilderConfig(r=3, sample_size=4)
    with pytest.raises(ValidationError):
        BuilderConfig(kl_stop=-1)
    cfg = BuilderConfig(pool="mixed", r=20, sample_size=5, ordinary_r=10, ordinary_sample_size=2)
    assert cfg.lookahead() == {"invariant": (20, 5), "ordinary": (10, 2)}


def test_independent_shell_examples(inv_pools):
    pool = inv_pools["invariant"]
    A = [("invariant", ZERO)]
    tr = _tracker(inv_pools, [ZERO])
    assert independent_shell(A, 0, pool, tr) == []
    assert independent_shell(A, 1, pool, tr) == [F1]
    full = enumerate_monomials(pool.order, None, 300)
    tr_full = _tracker(inv_pools, full)
    A_full = [("invariant", a) for a in full]
    assert independent_shell(A_full, 5, pool, tr_full) == []


def test_min_depth_examples(inv_pools):
    pool = inv_pools["invariant"]
    A = [("invariant", ZERO)]
    tr = _tracker(inv_pools, [ZERO])
    assert min_depth(A, 1, pool, tr) == (1, [F1])
    assert min_depth(A, 0, pool, tr) == (0, [])
    depths = [min_depth(A, r, pool, tr)[0] for r in range(1, 12)]
    assert depths == sorted(depths)
    with pytest.raises(InsufficientRank):
        min_depth(A, 31, pool, tr)


def test_succeeding_policy_only_looks_forward(inv_pools):
    pool = inv_pools["invariant"]
    A = [("invariant", ZERO), ("invariant", F3)]
    tr = _tracker(inv_pools, [ZERO, F3])
    d, found = min_depth(A, 2, pool, tr, SUCCEEDING)
    assert all(pool.order.compare(a, F3) > 0 for a in found)
    assert d == 2


def test_stepwise_follows_order(inv_pools, positive_target):
    path = stepwise_build(positive_target, inv_pools, BuilderConfig(max_terms=12))
    chosen = [s.term[1] for s in path.steps[1:]]
    table = enumerate_monomials(inv_pools["invariant"].order, None, 15)[1:]
    # f3^2 is dependent on the degree-one terms and is skipped
    assert chosen[:12] == [a for a in table if a != (0, 0, 2, 0, 0)][:12]
    assert path.terminal == HALTED_BY_BUDGET


def test_uniform_target_halts_immediately(inv_pools):
    path = stepwise_build(np.full(256, 1 / 256), inv_pools, BuilderConfig())
    assert path.n_terms == 0 and path.final.D == pytest.approx(0.0, abs=1e-15)


def test_stepwise_full_run_recovers(inv_pools, action4, positive_target):
    path = stepwise_build(positive_target, inv_pools, BuilderConfig(kl_stop=0.0))
    assert path.terminal == EXACT_RECOVERY and path.n_terms <= 30
    assert verify_halting(path, action4, positive_target).checked
    assert _decreasing(path)


def test_greedy_picks_f3_for_exponential_target(inv_pools):
    f3 = inv_pools["invariant"].values(F3)
    target = np.exp(0.3 * f3)
    target /= target.sum()
    path = greedy_build(target, inv_pools, BuilderConfig(r=5))
    assert path.steps[1].term == ("invariant", F3)
    assert path.steps[1].D <= 1e-9
    assert path.terminal in (HALTED_BY_KL, EXACT_RECOVERY)


def test_greedy_invariant_target_exact(inv_pools, action4, positive_target):
    target = action4.symmetrize(positive_target)
    path = greedy_build(target, inv_pools, BuilderConfig(kl_stop=0.0))
    rep = verify_halting(path, action4, target)
    assert rep.sup_error <= 1e-8 and path.n_terms <= 30
    assert np.max(np.abs(path.final.model.density - target)) <= 1e-8


def test_verify_halting_budget_not_checked(inv_pools, action4, positive_target):
    path = greedy_build(positive_target, inv_pools, BuilderConfig(max_terms=3))
    rep = verify_halting(path, action4, positive_target)
    assert path.terminal == HALTED_BY_BUDGET and not rep.checked


def test_verify_halting_rejects_wrong_final(inv_pools, action4, positive_target):
    path = greedy_build(positive_target, inv_pools, BuilderConfig(kl_stop=0.0))
    other = random_simplex(np.random.default_rng(99), 256, floor=1e-3)
    with pytest.raises(HaltingViolation):
        verify_halting(path, action4, other)


def test_determinism_across_threads(inv_pools, positive_target):
    cfg = dict(r=8, sample_size=4, seed=3, max_terms=10)
    a = greedy_build(positive_target, inv_pools, BuilderConfig(threads=1, **cfg))
    b = greedy_build(positive_target, inv_pools, BuilderConfig(threads=4, **cfg))
    assert [s.term for s in a.steps] == [s.term for s in b.steps]
    assert [s.D for s in a.steps] == [s.D for s in b.steps]


def test_seed_changes_sampled_path(inv_pools, positive_target):
    runs = {tuple(s.term for s in greedy_build(
        positive_target, inv_pools, BuilderConfig(r=10, sample_size=2, seed=s, max_terms=6)).steps[1:])
        for s in range(4)}
    assert len(runs) > 1


def test_chosen_terms_are_independent(inv_pools, positive_target):
    path = greedy_build(positive_target, inv_pools, BuilderConfig(kl_stop=0.0))
    tracker = SpanTracker(inv_pools)
    tracker.add(("invariant", ZERO))
    for step in path.steps[1:]:
        assert tracker.add(step.term)


def test_greedy_dominates_stepwise_at_first_step(inv_pools):
    rng = np.random.default_rng(21)
    for _ in range(5):
        target = random_simplex(rng, 256, floor=1e-3)
        g = greedy_build(target, inv_pools, BuilderConfig(max_terms=1))
        s = stepwise_build(target, inv_pools, BuilderConfig(max_terms=1))
        assert g.steps[1].D <= s.steps[1].D + 1e-12


@pytest.mark.xfail(strict=True, reason="greedy choices are locally optimal only; "
                   "later steps can trail the stepwise path")
def test_greedy_dominates_stepwise_along_path(inv_pools):
    rng = np.random.default_rng(21)
    for _ in range(10):
        target = random_simplex(rng, 256, floor=1e-3)
        g = greedy_build(target, inv_pools, BuilderConfig(kl_stop=0.0))
        s = stepwise_build(target, inv_pools, BuilderConfig(kl_stop=0.0))
        for gs, ss in zip(g.steps, s.steps):
            assert gs.D <= ss.D + 1e-12


def test_mixed_pool_matches_invariant_on_invariant_target(gens, space4, inv_pools, action4, positive_target):
    target = action4.symmetrize(positive_target)
    inv = greedy_build(target, inv_pools, BuilderConfig())
    mixed = greedy_build(target, make_pools("mixed", gens, space4),
                         BuilderConfig(pool="mixed", r=5, ordinary_r=5, ordinary_sample_size=3))
    assert mixed.final.D <= 1e-9 and inv.final.D <= 1e-9
    assert abs(mixed.final.D - inv.final.D) <= 1e-9
    assert _decreasing(mixed)


def test_stepwise_rejects_mixed(gens, space4, positive_target):
    with pytest.raises(ValidationError):
        stepwise_build(positive_target, make_pools("mixed", gens, space4), BuilderConfig(pool="mixed"))


@pytest.mark.slow
def test_ordinary_pool_full_recovery(ord_pools, positive_target):
    path = stepwise_build(positive_target, ord_pools, BuilderConfig(pool="ordinary", kl_stop=0.0))
    assert path.terminal == EXACT_RECOVERY
    assert path.n_terms <= 255
    assert np.max(np.abs(path.final.model.density - positive_target)) <= 1e-8


def test_path_rows(inv_pools, positive_target):
    path = greedy_build(positive_target, inv_pools, BuilderConfig(max_terms=2))
    rows = path_rows(path, inv_pools)
    assert rows[0]["term"] == "1" and rows[0]["l"] == 0
    assert len(rows) == 3 and rows[1]["pool"] == "invariant"


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from(["literal-shell", "succeeding-only"]),
       st.integers(1, 6))
def test_paths_decrease_and_repeat(inv_pools, seed, policy, r):
    target = random_simplex(np.random.default_rng(seed), 256, floor=1e-4)
    cfg = BuilderConfig(r=r, policy=policy, max_terms=8, seed=seed)
    a = greedy_build(target, inv_pools, cfg)
    b = greedy_build(target, inv_pools, cfg)
    assert _decreasing(a)
    assert [s.term for s in a.steps] == [s.term for s in b.steps]
