"""Maximum-entropy fitting on a finite state space, by convex duality.

The ME distribution under moment constraints E_p F_j = t_j is the
exponential family member p ~ exp(sum_j lambda_j F_j) whose moments match
the targets. It is found by damped Newton on the dual

    phi(theta) = log sum_k exp(U theta)_k - theta . tau

where U is an orthonormalized (under the uniform measure) version of the
centered, scaled feature columns. The fitted density only depends on the span
of the features, so the orthonormal basis keeps Newton well conditioned even
when raw monomials are nearly collinear; lambda is mapped back at the end.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    AbsoluteContinuityViolation,
    MaxIterations,
    NotRealizable,
    RankDeficient,
    ShapeMismatch,
    ValidationError,
)
from .group import check_distribution

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 200
PIVOT_THRESHOLD = 1e-9
LAMBDA_BOUND = 1e3
BOUNDARY_MASS = 1e-12
ARMIJO_SLOPE = 1e-4
ARMIJO_FACTOR = 0.5
# largest Newton move per iteration, in whitened coordinates; keeps a full
# step from collapsing the density onto a few cells
MAX_STEP = 10.0
EIGEN_FLOOR = 1e-12


def entropy(p) -> float:
    p = check_distribution(p)
    nz = p[p > 0]
    return float(max(0.0, -np.sum(nz * np.log(nz))))


def kl(p, q) -> float:
    """D(p || q); raises when q vanishes somewhere p does not."""
    p = check_distribution(p)
    q = check_distribution(q, p.shape[0])
    support = p > 0
    bad = np.flatnonzero(support & (q <= 0))
    if bad.size:
        raise AbsoluteContinuityViolation(int(bad[0]))
    ps, qs = p[support], q[support]
    return float(max(0.0, np.sum(ps * (np.log(ps) - np.log(qs)))))


def moments(p, features) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    F = np.asarray(features, dtype=float)
    if F.ndim == 1:
        F = F[:, None]
    if p.ndim != 1 or F.shape[0] != p.shape[0]:
        raise ShapeMismatch(f"distribution of length {p.shape[0]} vs features of shape {F.shape}")
    return F.T @ p


def _logsumexp(z: np.ndarray) -> float:
    zmax = float(np.max(z))
    return zmax + float(np.log(np.sum(np.exp(z - zmax))))


@dataclass(frozen=True, eq=False)
class ConstraintSet:
    """Constraint terms, their K x n feature matrix and target moments.

    Column 0 must be the constant feature with target 1.
    """

    terms: tuple
    features: np.ndarray
    targets: np.ndarray
    target: np.ndarray | None = None

    def __post_init__(self):
        F = np.asarray(self.features, dtype=float)
        t = np.asarray(self.targets, dtype=float)
        if F.ndim != 2 or t.ndim != 1 or F.shape[1] != t.shape[0]:
            raise ShapeMismatch(f"features {F.shape} vs targets {t.shape}")
        if len(self.terms) != F.shape[1]:
            raise ShapeMismatch(f"{len(self.terms)} terms for {F.shape[1]} feature columns")
        if F.shape[1] == 0 or not np.all(F[:, 0] == 1.0):
            raise ValidationError("column 0 must be the all-ones feature")
        if abs(t[0] - 1.0) > 1e-12:
            raise ValidationError("target of the constant feature must be 1")
        object.__setattr__(self, "features", F)
        object.__setattr__(self, "targets", t)

    @classmethod
    def from_distribution(cls, terms, features, p) -> "ConstraintSet":
        p = check_distribution(p, np.asarray(features).shape[0])
        return cls(tuple(terms), np.asarray(features, dtype=float), moments(p, features), p)

    @property
    def K(self) -> int:
        return self.features.shape[0]

    @property
    def n(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True, eq=False)
class MaxEntModel:
    constraints: ConstraintSet
    lam: np.ndarray  # lam[0] = -psi
    density: np.ndarray
    psi: float

    def log_density(self) -> np.ndarray:
        return self.constraints.features @ self.lam


@dataclass
class FitReport:
    kl_to_target: float | None
    entropy: float
    residual_inf: float
    iterations: int
    moments: np.ndarray
    objective_trace: list[float] = field(default_factory=list)


@dataclass(frozen=True, eq=False)
class _Whitening:
    mu: np.ndarray
    sd: np.ndarray
    R: np.ndarray
    U: np.ndarray  # K x (n-1), uniform mean 0, uniform second moments I


def _whiten(cs: ConstraintSet) -> _Whitening:
    F = cs.features
    K = cs.K
    raw = F[:, 1:]
    mu = raw.mean(axis=0)
    sd = raw.std(axis=0)
    for j in np.flatnonzero(sd <= 0):
        raise RankDeficient(int(j) + 1, cs.terms[int(j) + 1])
    Z = (raw - mu) / sd
    if Z.shape[1] == 0:
        return _Whitening(mu, sd, np.zeros((0, 0)), Z)
    Q, R = np.linalg.qr(Z / np.sqrt(K))
    # columns of Z / sqrt(K) have unit norm, so |R_jj| is the relative size
    # of the part of column j not explained by the constant and columns < j
    diag = np.abs(np.diag(R))
    for j in np.flatnonzero(diag < PIVOT_THRESHOLD):
        raise RankDeficient(int(j) + 1, cs.terms[int(j) + 1])
    return _Whitening(mu, sd, R, np.sqrt(K) * Q)


def check_rank(cs: ConstraintSet) -> None:
    _whiten(cs)


def _interior_margin(cs: ConstraintSet) -> float:
    """Largest t such that some p >= t on every cell matches all the moments."""
    from scipy.optimize import linprog

    K, n = cs.K, cs.n
    # variables (p_1..p_K, t); maximize t
    c = np.zeros(K + 1)
    c[-1] = -1.0
    A_eq = np.hstack([cs.features.T, np.zeros((n, 1))])
    A_ub = np.hstack([-np.eye(K), np.ones((K, 1))])
    res = linprog(c, A_ub=A_ub, b_ub=np.zeros(K), A_eq=A_eq, b_eq=cs.targets,
                  bounds=[(0, None)] * K + [(None, None)], method="highs")
    if res.status == 2:
        return -np.inf
    if res.status != 0:
        return np.nan
    return float(res.x[-1])


def solve_maxent(
    cs: ConstraintSet,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    init: Sequence[float] | None = None,
    lambda_bound: float = LAMBDA_BOUND,
) -> tuple[MaxEntModel, FitReport]:
    """Fit the ME distribution for ``cs``.

    ``init`` is an optional starting lambda in raw coordinates (entry 0 is
    ignored), e.g. an incumbent solution padded with zeros.
    Convergence requires |E_p F_j - t_j| <= tol for all j. If the line
    search stalls first, the fit is still accepted when every residual is
    within tol * max(1, max|F_j|), the float64 floor for large features.
    """
    W = _whiten(cs)
    F, t = cs.features, cs.targets
    K, n = cs.K, cs.n
    scale = np.maximum(1.0, np.max(np.abs(F), axis=0))

    if n > 1:
        tau = np.linalg.solve(W.R.T, (t[1:] - W.mu) / W.sd)
    else:
        tau = np.zeros(0)
    theta = np.zeros(n - 1)
    if init is not None:
        init = np.asarray(init, dtype=float)
        if init.shape != (n,):
            raise ShapeMismatch(f"initial lambda of shape {init.shape}, expected ({n},)")
        theta = W.R @ (init[1:] * W.sd)
        if not np.all(np.isfinite(theta)):
            theta = np.zeros(n - 1)

    def objective(th):
        z = W.U @ th
        return _logsumexp(z) - float(th @ tau)

    def gradient(p):
        # equals U^T p - tau, but anchored to the raw residual so rounding in
        # tau cannot leave a floor on the achievable moment error
        return np.linalg.solve(W.R.T, (F[:, 1:].T @ p - t[1:]) / W.sd)

    def density(th):
        z = W.U @ th
        z = z - np.max(z)
        w = np.exp(z)
        return w / w.sum()

    phi = objective(theta)
    trace = [phi]
    iterations = 0
    while True:
        p = density(theta)
        resid = F.T @ p - t
        if np.all(np.abs(resid) <= tol):
            break
        if iterations >= max_iter:
            _raise_failure(cs, f"no convergence after {max_iter} Newton steps "
                               f"(residual {np.max(np.abs(resid)):.3g})")
        if np.max(np.abs(theta)) > lambda_bound:
            raise NotRealizable(
                f"dual parameters exceed {lambda_bound:g}; targets lie on the boundary "
                "of the moment set and no strictly positive fit exists")
        g = gradient(p)
        log.debug("newton %d: residual %.3g, phi %.17g", iterations, np.max(np.abs(resid)), phi)
        Up = W.U * p[:, None]
        H = W.U.T @ Up - np.outer(W.U.T @ p, W.U.T @ p)
        # floor the spectrum so the step is a descent direction even when a
        # nearly degenerate density leaves H singular (H = I at uniform p)
        w, V = np.linalg.eigh(H)
        w = np.maximum(w, EIGEN_FLOOR)
        step = -V @ ((V.T @ g) / w)
        big = float(np.max(np.abs(step)))
        if big > MAX_STEP:
            step *= MAX_STEP / big
        slope = float(g @ step)
        gnorm = float(np.max(np.abs(g)))
        # below this, changes in phi are rounding noise and Armijo is blind
        noise = 64 * np.finfo(float).eps * max(1.0, abs(phi))
        if -slope < noise:
            cand = theta + step
            phi_new = objective(cand)
            improved = phi_new <= phi + noise and np.max(np.abs(gradient(density(cand)))) < gnorm
            if not improved:
                if np.all(np.abs(resid) <= tol * scale):
                    break
                _raise_failure(cs, "Newton stalled at the rounding floor "
                                   f"(residual {np.max(np.abs(resid)):.3g})")
        else:
            s = 1.0
            while True:
                cand = theta + s * step
                phi_new = objective(cand)
                if phi_new <= phi + ARMIJO_SLOPE * s * slope:
                    break
                s *= ARMIJO_FACTOR
                if s < 1e-12:
                    _raise_failure(cs, "line search stalled before reaching tolerance "
                                       f"(residual {np.max(np.abs(resid)):.3g})")
        theta, phi = cand, phi_new
        trace.append(phi)
        iterations += 1

    p = density(theta)
    if p.min() < BOUNDARY_MASS:
        margin = _interior_margin(cs)
        if not margin > BOUNDARY_MASS:
            raise NotRealizable(
                f"fit converged only by driving cells to mass {p.min():.3g}; the targets "
                f"lie on the boundary of the moment set (interior margin {margin:.3g})")
    beta = np.linalg.solve(W.R, theta) if n > 1 else np.zeros(0)
    lam_rest = beta / W.sd
    shift = -float(beta @ (W.mu / W.sd))
    z = W.U @ theta
    psi = _logsumexp(z) - shift
    lam = np.concatenate([[-psi], lam_rest])
    model = MaxEntModel(cs, lam, p, psi)
    report = FitReport(
        kl_to_target=kl(cs.target, p) if cs.target is not None else None,
        entropy=entropy(p),
        residual_inf=float(np.max(np.abs(F.T @ p - t))),
        iterations=iterations,
        moments=F.T @ p,
        objective_trace=trace,
    )
    return model, report


def _raise_failure(cs: ConstraintSet, message: str):
    margin = _interior_margin(cs)
    if not margin > BOUNDARY_MASS:
        raise NotRealizable(f"{message}; the targets admit no strictly positive distribution "
                            f"(interior margin {margin:.3g})")
    raise MaxIterations(message)


def loglik(model: MaxEntModel, counts) -> float:
    n = np.asarray(counts, dtype=float)
    if n.shape != (model.constraints.K,):
        raise ShapeMismatch(f"counts of shape {n.shape}, expected ({model.constraints.K},)")
    support = n > 0
    return float(np.sum(n[support] * np.log(model.density[support])))


def loglik_gradient(model: MaxEntModel, counts) -> np.ndarray:
    """Gradient of sum_k n_k log p_k(lambda) over the free parameters.

    Entry alpha is sum_k n_k f^alpha(w_k) - n E_p f^alpha; entry 0 vanishes
    because the intercept is tied to normalization.
    """
    n = np.asarray(counts, dtype=float)
    F = model.constraints.features
    if n.shape != (F.shape[0],):
        raise ShapeMismatch(f"counts of shape {n.shape}, expected ({F.shape[0]},)")
    if n.sum() <= 0:
        raise ValidationError("counts must have a positive total")
    return F.T @ n - n.sum() * (F.T @ model.density)


def loglik_gradient_check(model: MaxEntModel, counts) -> float:
    return float(np.max(np.abs(loglik_gradient(model, counts))))


def model_from_lambda(cs: ConstraintSet, lam) -> MaxEntModel:
    """Exponential-family member for an arbitrary lambda (lam[0] is ignored)."""
    lam = np.asarray(lam, dtype=float)
    z = cs.features[:, 1:] @ lam[1:]
    psi = _logsumexp(z)
    p = np.exp(z - psi)
    return MaxEntModel(cs, np.concatenate([[-psi], lam[1:]]), p / p.sum(), psi)
