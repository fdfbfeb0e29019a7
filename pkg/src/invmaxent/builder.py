"""Nested maximum-entropy models grown one term at a time.

Two strategies share the same bookkeeping:

* stepwise: add the smallest (under the pool's monomial order) index whose
  feature vector is independent of the current span;
* greedy lookahead: find the thinnest shell around the current index set
  holding ``r`` independent candidates, fit every candidate (or a seeded
  subsample) and keep the one with the smallest divergence from the target.

A path stops once the fitted density matches the projection of the target
onto the pool's function space (the symmetrized target for an invariant
pool, the target itself otherwise), when the span of the pool is exhausted,
when the term budget is spent, or when the targets hit the boundary of the
moment set.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    HaltingViolation,
    InsufficientRank,
    MaxIterations,
    NotRealizable,
    RankDeficient,
    ValidationError,
)
from .features import INVARIANT, MIXED, ORDINARY, FeaturePool, SpanTracker, Term
from .group import GroupAction, check_distribution
from .maxent import ConstraintSet, FitReport, MaxEntModel, entropy, kl, solve_maxent
from .ordering import LITERAL, POLICIES, MultiIndex, shell_from_ranks

log = logging.getLogger(__name__)

EXACT_RECOVERY = "exact-recovery"
HALTED_BY_KL = "halted-by-kl"
HALTED_BY_BUDGET = "halted-by-budget"
HALTED_AT_BOUNDARY = "halted-at-boundary"

GREEDY = "greedy"
STEPWISE = "stepwise"

TIE_TOL = 1e-13
MONOTONE_SLACK = 1e-12
ZERO_EXCESS = 1e-14
POOL_ORDER = (INVARIANT, ORDINARY)


@dataclass(frozen=True)
class BuilderConfig:
    pool: str = INVARIANT
    r: int = 5
    sample_size: int | None = None
    seed: int = 0
    max_terms: int | None = None
    kl_stop: float = 1e-9
    policy: str = LITERAL
    threads: int = 1
    # lookahead for the ordinary half of a mixed pool; defaults to (r, sample_size)
    ordinary_r: int | None = None
    ordinary_sample_size: int | None = None
    solver_tol: float = 1e-10

    def __post_init__(self):
        if self.pool not in (INVARIANT, ORDINARY, MIXED):
            raise ValidationError(f"unknown pool {self.pool!r}")
        if self.policy not in POLICIES:
            raise ValidationError(f"unknown candidate policy {self.policy!r}")
        for r, s in self.lookahead().values():
            if r < 1:
                raise ValidationError("lookahead r must be positive")
            if s is not None and not 1 <= s <= r:
                raise ValidationError(f"sample size {s} must lie in 1..r (r = {r})")
        if self.max_terms is not None and self.max_terms < 0:
            raise ValidationError("max_terms must be nonnegative")
        if self.kl_stop < 0:
            raise ValidationError("kl_stop must be nonnegative")
        if self.threads < 1:
            raise ValidationError("threads must be positive")

    def tags(self) -> tuple[str, ...]:
        return (INVARIANT, ORDINARY) if self.pool == MIXED else (self.pool,)

    def lookahead(self) -> dict[str, tuple[int, int | None]]:
        out = {}
        for tag in self.tags():
            if tag == ORDINARY and self.pool == MIXED:
                r = self.ordinary_r if self.ordinary_r is not None else self.r
                s = self.ordinary_sample_size if self.ordinary_r is not None else self.sample_size
                out[tag] = (r, s)
            else:
                out[tag] = (self.r, self.sample_size)
        return out


@dataclass(frozen=True, eq=False)
class ModelStep:
    l: int
    term: Term | None  # None for the constant-only model
    A: tuple[Term, ...]
    D: float
    H: float
    excess: float
    residual: float
    iterations: int
    model: MaxEntModel
    report: FitReport
    candidates: int = 0


@dataclass(eq=False)
class ModelPath:
    config: BuilderConfig
    strategy: str
    steps: list[ModelStep]
    terminal: str
    floor: float  # D(target || projection of target onto the pool span)
    dimension: int
    diagnostics: list[str] = field(default_factory=list)

    @property
    def final(self) -> ModelStep:
        return self.steps[-1]

    @property
    def n_terms(self) -> int:
        return len(self.steps) - 1


# -- candidate sets -----------------------------------------------------------


def _pool_indices(A: Sequence[Term], tag: str, pool: FeaturePool) -> list[MultiIndex]:
    zero = (0,) * pool.gens.N
    return [zero] + [alpha for t, alpha in A if t == tag and any(alpha)]


class _ShellScanner:
    """Grows the shell around one pool's part of A and tests independence."""

    def __init__(self, A: Sequence[Term], tag: str, pool: FeaturePool, tracker: SpanTracker, policy: str):
        self.tag, self.pool, self.tracker, self.policy = tag, pool, tracker, policy
        order = pool.order
        self.ranks = sorted({order.rank(a) for a in _pool_indices(A, tag, pool)})
        self._indep: dict[int, bool] = {}

    def independent(self, d: int) -> list[MultiIndex]:
        order = self.pool.order
        ranks = shell_from_ranks(self.ranks, d, self.policy)
        fresh = [rk for rk in ranks if rk not in self._indep]
        mask = self.tracker.independent_mask([(self.tag, order.unrank(rk)) for rk in fresh])
        self._indep.update(zip(fresh, mask.tolist()))
        return [order.unrank(rk) for rk in ranks if self._indep[rk]]


def remaining_rank(tracker: SpanTracker, pool: FeaturePool) -> int:
    """How much the pool can still add to the tracked span."""
    if pool.dimension == pool.space.K:
        return pool.space.K - tracker.rank
    if all(t == pool.tag for t, _ in tracker.terms):
        return pool.dimension - tracker.rank
    # mixed span: add the pool's class indicators and see how far the rank grows
    probe = tracker.copy()
    before = probe.rank
    for c in range(pool.dimension):
        probe.add_vector((pool.classes == c).astype(np.int64))
    return probe.rank - before


def independent_shell(A: Sequence[Term], d: int, pool: FeaturePool, tracker: SpanTracker,
                      policy: str = LITERAL) -> list[MultiIndex]:
    """Indices of ``pool`` within order-distance ``d`` of A and independent of the span."""
    return _ShellScanner(A, pool.tag, pool, tracker, policy).independent(d)


def min_depth(A: Sequence[Term], r: int, pool: FeaturePool, tracker: SpanTracker,
              policy: str = LITERAL) -> tuple[int, list[MultiIndex]]:
    """Thinnest shell depth holding at least ``r`` independent indices, and that shell."""
    if r <= 0:
        return 0, []
    left = remaining_rank(tracker, pool)
    if r > left:
        raise InsufficientRank(f"{r} independent terms requested, {pool.tag} pool has {left} left")
    scanner = _ShellScanner(A, pool.tag, pool, tracker, policy)
    d = 0
    while True:
        found = scanner.independent(d)
        if len(found) >= r:
            return d, found
        d += 1


# -- fitting ------------------------------------------------------------------


def _features(pools: dict[str, FeaturePool], terms: Sequence[Term]) -> np.ndarray:
    return np.column_stack([pools[tag].values(alpha) for tag, alpha in terms])


def _fit(pools, terms, target, init, tol, F=None):
    if F is None:
        F = _features(pools, terms)
    cs = ConstraintSet(tuple(terms), F, F.T @ target, target)
    return solve_maxent(cs, tol=tol, init=init)


def _projection(pools: dict[str, FeaturePool], target: np.ndarray) -> np.ndarray:
    # the finest pool decides: any ordinary part means the full space
    finest = max(pools.values(), key=lambda p: p.dimension)
    return finest.project(target)


def _order_key(pools, term: Term) -> tuple[int, int]:
    tag, alpha = term
    return (POOL_ORDER.index(tag), pools[tag].order.rank(alpha))


class _Builder:
    def __init__(self, target, pools: dict[str, FeaturePool], config: BuilderConfig, strategy: str):
        if set(pools) != set(config.tags()):
            raise ValidationError(f"pool {config.pool!r} needs feature pools {config.tags()}, got {tuple(pools)}")
        K = {p.space.K for p in pools.values()}
        if len(K) != 1:
            raise ValidationError("feature pools live on different lattices")
        self.K = K.pop()
        self.target = check_distribution(target, self.K)
        self.pools = pools
        self.config = config
        self.strategy = strategy
        self.tracker = SpanTracker(pools)
        self.rng = np.random.default_rng(config.seed)
        self.dimension = max(p.dimension for p in pools.values())
        self.max_terms = config.max_terms if config.max_terms is not None else self.dimension - 1
        projected = _projection(pools, self.target)
        self.floor = kl(self.target, projected)

    def run(self) -> ModelPath:
        first_tag = self.config.tags()[0]
        const: Term = (first_tag, (0,) * self.pools[first_tag].gens.N)
        self.tracker.add(const)
        model, report = _fit(self.pools, [const], self.target, None, self.config.solver_tol)
        steps = [self._step(0, None, [const], model, report, 0)]
        path = ModelPath(self.config, self.strategy, steps, HALTED_BY_BUDGET, self.floor, self.dimension)
        while True:
            last = steps[-1]
            if self.tracker.rank >= self.dimension or last.excess <= ZERO_EXCESS:
                path.terminal = EXACT_RECOVERY
                break
            if last.excess <= self.config.kl_stop:
                path.terminal = HALTED_BY_KL
                break
            if last.l >= self.max_terms:
                path.terminal = HALTED_BY_BUDGET
                break
            try:
                choice = self._choose(last)
            except InsufficientRank as exc:
                path.terminal = HALTED_BY_BUDGET
                path.diagnostics.append(str(exc))
                break
            if choice is None:
                path.terminal = HALTED_AT_BOUNDARY
                path.diagnostics.append(
                    f"step {last.l + 1}: every candidate fit failed; targets on the boundary "
                    "of the moment set (reduce the state space to the support to continue)")
                break
            term, model, report, n_cand = choice
            if not self.tracker.add(term):
                raise AssertionError(f"chosen term {term} is dependent on the current span")
            A = list(last.A) + [term]
            step = self._step(last.l + 1, term, A, model, report, n_cand)
            if not step.D < last.D + MONOTONE_SLACK or not step.H < last.H + MONOTONE_SLACK:
                raise AssertionError(
                    f"step {step.l}: divergence or entropy increased "
                    f"(D {last.D:.17g} -> {step.D:.17g}, H {last.H:.17g} -> {step.H:.17g})")
            steps.append(step)
        return path

    def _step(self, l, term, A, model, report, n_cand) -> ModelStep:
        D = kl(self.target, model.density)
        return ModelStep(l, term, tuple(A), D, entropy(model.density), max(0.0, D - self.floor),
                         report.residual_inf, report.iterations, model, report, n_cand)

    # -- candidate choice ---------------------------------------------------

    def _choose(self, last: ModelStep):
        if self.strategy == STEPWISE:
            return self._choose_stepwise(last)
        return self._choose_greedy(last)

    def _choose_stepwise(self, last: ModelStep):
        (tag,) = self.config.tags()
        pool = self.pools[tag]
        if remaining_rank(self.tracker, pool) <= 0:
            raise InsufficientRank(f"{tag} pool exhausted")
        order = pool.order
        rk = 0
        while True:
            alpha = order.unrank(rk)
            rk += 1
            term = (tag, alpha)
            if not self.tracker.is_independent(term):
                continue
            try:
                model, report = self._solve(last, term)
            except RankDeficient:
                log.info("skipping %s: numerically collinear with the current features", term)
                continue
            except (NotRealizable, MaxIterations) as exc:
                log.info("fit with %s failed: %s", term, exc)
                return None
            return term, model, report, 1

    def _candidates(self, last: ModelStep) -> list[Term]:
        out: list[Term] = []
        for tag, (r, sample) in self.config.lookahead().items():
            pool = self.pools[tag]
            left = remaining_rank(self.tracker, pool)
            if left == 0:
                continue
            # near the end of the pool fewer than r independent terms exist
            _, shell = min_depth(last.A, min(r, left), pool, self.tracker, self.config.policy)
            if sample is not None and len(shell) > sample:
                pick = np.sort(self.rng.choice(len(shell), size=sample, replace=False))
                shell = [shell[i] for i in pick]
            out.extend((tag, alpha) for alpha in shell)
        if not out:
            raise InsufficientRank("every pool is exhausted")
        return out

    def _solve(self, last: ModelStep, term: Term):
        init = np.concatenate([last.model.lam, [0.0]])
        tag, alpha = term
        F = np.column_stack([last.model.constraints.features, self.pools[tag].values(alpha)])
        return _fit(self.pools, list(last.A) + [term], self.target, init, self.config.solver_tol, F)

    def _score(self, last: ModelStep, term: Term):
        try:
            model, report = self._solve(last, term)
        except RankDeficient:
            log.info("skipping %s: numerically collinear with the current features", term)
            return None
        except (NotRealizable, MaxIterations) as exc:
            log.info("candidate %s failed: %s", term, exc)
            return None
        return kl(self.target, model.density), model, report

    def _choose_greedy(self, last: ModelStep):
        cands = self._candidates(last)
        if self.config.threads > 1 and len(cands) > 1:
            with ThreadPoolExecutor(max_workers=self.config.threads) as ex:
                scores = list(ex.map(lambda t: self._score(last, t), cands))
        else:
            scores = [self._score(last, t) for t in cands]
        scored = [(s, t) for s, t in zip(scores, cands) if s is not None]
        if not scored:
            return None
        best = min(s[0] for s, _ in scored)
        ties = [(s, t) for s, t in scored if s[0] <= best + TIE_TOL]
        (score, model, report), term = min(ties, key=lambda st: _order_key(self.pools, st[1]))
        log.info("step %d: %s chosen from %d candidates, D = %.6g", last.l + 1, term, len(cands), score)
        return term, model, report, len(cands)


def greedy_build(target, pools: dict[str, FeaturePool], config: BuilderConfig) -> ModelPath:
    return _Builder(target, pools, config, GREEDY).run()


def stepwise_build(target, pools: dict[str, FeaturePool], config: BuilderConfig) -> ModelPath:
    if config.pool == MIXED:
        raise ValidationError("stepwise construction needs a single pool; the mixed pool has no joint order")
    return _Builder(target, pools, config, STEPWISE).run()


def make_pools(pool: str, gens, space) -> dict[str, FeaturePool]:
    """Feature pools for ``pool`` (invariant, ordinary or mixed) on ``space``."""
    out = {}
    if pool in (INVARIANT, MIXED):
        out[INVARIANT] = FeaturePool(INVARIANT, gens, space)
    if pool in (ORDINARY, MIXED):
        out[ORDINARY] = FeaturePool.ordinary(space)
    if not out:
        raise ValidationError(f"unknown pool {pool!r}")
    return out


@dataclass
class HaltingReport:
    terminal: str
    steps: int
    sup_error: float
    bound: float
    checked: bool


def verify_halting(path: ModelPath, action: GroupAction, target, tol: float = 1e-8) -> HaltingReport:
    """Check that a finished invariant-pool path ends at the symmetrized target.

    Budget and boundary terminations are reported as non-terminal. A path
    stopped by a positive KL threshold is held to the bound that threshold
    implies (sup |p - q| <= ||p - q||_1 <= sqrt(2 D)).
    """
    if path.config.pool != INVARIANT:
        raise ValidationError("halting is defined for the invariant pool")
    M = action.orbits.M
    sym = action.symmetrize(check_distribution(target, action.space.K))
    err = float(np.max(np.abs(path.final.model.density - sym)))
    if path.terminal in (HALTED_BY_BUDGET, HALTED_AT_BOUNDARY):
        return HaltingReport(path.terminal, path.n_terms, err, np.inf, False)
    bound = tol if path.terminal == EXACT_RECOVERY else max(tol, float(np.sqrt(2 * path.config.kl_stop)))
    if path.n_terms > M - 1:
        raise HaltingViolation(f"path used {path.n_terms} terms, more than M - 1 = {M - 1}")
    if not err <= bound:
        raise HaltingViolation(f"final density differs from the symmetrized target by {err:.3g} > {bound:.3g}")
    return HaltingReport(path.terminal, path.n_terms, err, bound, True)


def path_rows(path: ModelPath, pools: dict[str, FeaturePool]) -> list[dict]:
    rows = []
    for st in path.steps:
        tag, alpha = st.term if st.term is not None else (path.config.tags()[0], None)
        rows.append({
            "l": st.l,
            "term": "1" if alpha is None else pools[tag].label(alpha),
            "alpha": "" if alpha is None else ",".join(map(str, alpha)),
            "pool": tag,
            "D": st.D,
            "H": st.H,
            "excess": st.excess,
            "residual": st.residual,
            "iterations": st.iterations,
            "candidates": st.candidates,
        })
    return rows
