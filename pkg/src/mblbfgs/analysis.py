"""Numerical verification of the solver's eigenvalue and convergence bounds.

Constants are measured conservatively from runs (dense monitors for the
inverse-Hessian eigenvalue range, max-plus-margin for the gradient-norm
bound), so each verified inequality is a valid one-sided check.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .lbfgs import LbfgsMemory, dense_direct_hessian, dense_inverse_hessian
from .objective import Problem, QuadraticProblem
from .solver import RunResult, SolverConfig, run

MONITOR_DIM_LIMIT = 200


@dataclass
class TheoremConstants:
    """Problem and run constants entering the convergence bounds.

    hess_min/hess_max bound the full-Hessian spectrum and
    overlap_hess_min/overlap_hess_max the spectrum of every subset Hessian;
    approx_min/approx_max are the measured eigenvalue extremes of the
    inverse-Hessian approximations over a run; grad_bound bounds
    batch-gradient norms; grad_growth is the gradient-growth constant of the
    nonconvex noise model; overlap_lipschitz bounds the overlap-gradient
    Lipschitz constant.
    """

    hess_min: float
    hess_max: float
    approx_min: float
    approx_max: float
    grad_bound: float
    grad_growth: float = 1.0
    overlap_hess_min: float | None = None
    overlap_hess_max: float | None = None
    overlap_lipschitz: float | None = None
    f_star: float | None = None
    f_lower: float | None = None

    def __post_init__(self):
        if not 0 < self.hess_min <= self.hess_max:
            raise ValueError("need 0 < hess_min <= hess_max")
        if not 0 < self.approx_min <= self.approx_max:
            raise ValueError("need 0 < approx_min <= approx_max")
        if self.grad_bound < 0:
            raise ValueError("grad_bound must be >= 0")
        if self.overlap_hess_min is not None and self.overlap_hess_max is not None:
            if not 0 < self.overlap_hess_min <= self.overlap_hess_max:
                raise ValueError("need 0 < overlap_hess_min <= overlap_hess_max")


def measure_hessian_eigen_bounds(snapshots: list[LbfgsMemory], d: int) -> tuple[float, float]:
    """(min, max) eigenvalue of the dense inverse-Hessian over all snapshots.

    Raises if the minimum is not strictly positive, which would break the
    bounded-eigenvalue guarantee the solver relies on.
    """
    if d > MONITOR_DIM_LIMIT:
        raise ValueError(f"monitor refused for d = {d} > {MONITOR_DIM_LIMIT}")
    if not snapshots:
        raise ValueError("no snapshots to measure")
    mu1 = np.inf
    mu2 = -np.inf
    for snap in snapshots:
        eigs = np.linalg.eigvalsh(dense_inverse_hessian(snap, d))
        mu1 = min(mu1, float(eigs[0]))
        mu2 = max(mu2, float(eigs[-1]))
    if not mu1 > 0:
        raise ValueError(f"inverse-Hessian approximation lost positive definiteness (min eig {mu1})")
    return mu1, mu2


def trace_det_monitor(memory: LbfgsMemory, d: int) -> tuple[float, float]:
    """Trace and determinant of the direct Hessian approximation B."""
    if d > MONITOR_DIM_LIMIT:
        raise ValueError(f"monitor refused for d = {d} > {MONITOR_DIM_LIMIT}")
    B = dense_direct_hessian(memory, d)
    return float(np.trace(B)), float(np.linalg.det(B))


def convex_alpha_interval(constants: TheoremConstants) -> float:
    """Upper end of the admissible fixed-step interval for the convex bound."""
    return 1.0 / (2.0 * constants.approx_min * constants.hess_min)


def convex_limit_value(constants: TheoremConstants, alpha: float) -> float:
    c = constants
    return (alpha * c.approx_max**2 * c.grad_bound**2 * c.hess_max) / (4.0 * c.approx_min * c.hess_min)


def convex_bound_curve(constants: TheoremConstants, gap0: float, alpha: float, k_max: int) -> np.ndarray:
    """Expected-optimality-gap bound b_k for k = 0..k_max.

    b_k = (1 - 2 a mu1 lam)^k gap0 + [1 - (1 - a mu1 lam)^k] * limit, with the
    two slightly different decay rates implemented verbatim.
    """
    if not 0 < alpha < convex_alpha_interval(constants):
        raise ValueError("alpha outside (0, 1/(2 approx_min hess_min))")
    ks = np.arange(k_max + 1)
    rate_fast = 1.0 - 2.0 * alpha * constants.approx_min * constants.hess_min
    rate_slow = 1.0 - alpha * constants.approx_min * constants.hess_min
    limit = convex_limit_value(constants, alpha)
    return np.power(rate_fast, ks) * gap0 + (1.0 - np.power(rate_slow, ks)) * limit


def nonconvex_alpha_interval(constants: TheoremConstants) -> float:
    c = constants
    return c.approx_min / (c.approx_max**2 * c.grad_growth * c.hess_max)


def nonconvex_limit_value(constants: TheoremConstants, alpha: float) -> float:
    c = constants
    return alpha * c.approx_max**2 * c.grad_bound**2 * c.hess_max / c.approx_min


def nonconvex_bound(constants: TheoremConstants, gap0: float, alpha: float, horizon: int) -> float:
    """Bound on the average squared full-gradient norm over the first `horizon` iterations."""
    if not 0 < alpha < nonconvex_alpha_interval(constants):
        raise ValueError("alpha outside (0, approx_min / (approx_max^2 grad_growth hess_max))")
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    return nonconvex_limit_value(constants, alpha) + 2.0 * gap0 / (alpha * constants.approx_min * horizon)


def measured_grad_bound(runs: list[RunResult], margin: float = 0.1) -> float:
    """Max observed batch-gradient norm plus a safety margin."""
    peak = max(rec.grad_norm_batch for res in runs for rec in res.records)
    return (1.0 + margin) * peak


@dataclass
class ConvexNeighborhoodReport:
    applicable: bool
    passed_curve: bool
    passed_limit: bool
    alpha: float
    alpha_max: float
    constants: TheoremConstants | None
    limit_value: float | None
    mean_gap: np.ndarray | None
    bound: np.ndarray | None
    n_seeds: int

    @property
    def passed(self) -> bool:
        return self.applicable and self.passed_curve and self.passed_limit


def check_convex_neighborhood(problem: QuadraticProblem, config: SolverConfig,
                              n_seeds: int = 10) -> ConvexNeighborhoodReport:
    """Verify the fixed-step neighborhood bound on a quadratic problem.

    Runs `n_seeds` seeded solver instances, measures (approx_min, approx_max)
    from dense monitors and the gradient bound from observed batch norms, and
    checks that the seed-averaged optimality gap stays below the bound curve
    at every iteration and settles below the limit value. Declares itself
    inapplicable (rather than failing) when the configured alpha falls outside
    the measured admissible interval.
    """
    if n_seeds < 1:
        raise ValueError("n_seeds must be >= 1")
    if problem.kind != "quadratic":
        raise ValueError("neighborhood check requires a quadratic problem")

    results = []
    for i in range(n_seeds):
        cfg = replace(config, seed=i + 1, eval_every=1)
        res = run(problem, cfg, snapshot_hessians=True)
        if res.diverged:
            return ConvexNeighborhoodReport(
                applicable=False, passed_curve=False, passed_limit=False,
                alpha=config.alpha, alpha_max=np.nan, constants=None,
                limit_value=None, mean_gap=None, bound=None, n_seeds=n_seeds)
        results.append(res)

    snapshots = [snap for res in results for snap in res.hessian_snapshots]
    mu1, mu2 = measure_hessian_eigen_bounds(snapshots, problem.d)
    # Every subset Hessian of this quadratic equals A, so the overlap bounds
    # coincide with the full-spectrum bounds.
    constants = TheoremConstants(
        hess_min=problem.lambda_min, hess_max=problem.lambda_max,
        approx_min=mu1, approx_max=mu2,
        grad_bound=measured_grad_bound(results),
        overlap_hess_min=problem.lambda_min, overlap_hess_max=problem.lambda_max,
        overlap_lipschitz=problem.overlap_lipschitz_bound(), f_star=problem.f_star)

    alpha_max = convex_alpha_interval(constants)
    if not 0 < config.alpha < alpha_max:
        return ConvexNeighborhoodReport(
            applicable=False, passed_curve=False, passed_limit=False,
            alpha=config.alpha, alpha_max=alpha_max, constants=constants,
            limit_value=None, mean_gap=None, bound=None, n_seeds=n_seeds)

    k_len = min(len(res.records) for res in results)
    gaps = np.array([[rec.F_full - problem.f_star for rec in res.records[:k_len]] for res in results])
    mean_gap = gaps.mean(axis=0)
    bound = convex_bound_curve(constants, mean_gap[0], config.alpha, k_len - 1)
    slack = 1e-12 * np.maximum(1.0, np.abs(bound))
    passed_curve = bool(np.all(mean_gap <= bound + slack))

    limit = convex_limit_value(constants, config.alpha)
    tail = mean_gap[(3 * k_len) // 4:]
    passed_limit = bool(tail.mean() <= limit)

    return ConvexNeighborhoodReport(
        applicable=True, passed_curve=passed_curve, passed_limit=passed_limit,
        alpha=config.alpha, alpha_max=alpha_max, constants=constants,
        limit_value=limit, mean_gap=mean_gap, bound=bound, n_seeds=n_seeds)


@dataclass
class NonconvexAverageReport:
    applicable: bool
    passed: bool
    alpha: float
    alpha_max: float
    constants: TheoremConstants | None
    gap0: float | None
    bound: float | None
    mean_sq_grad: float | None
    rounds: int


def check_nonconvex_average(problem: Problem, epsilon: float = 1e-4, horizon: int = 5000,
                            seed: int = 1, grad_growth: float = 1.0, m: int = 10,
                            r: float = 0.1, o: float = 0.2, alpha0: float = 0.05,
                            max_rounds: int = 6) -> NonconvexAverageReport:
    """Verify the cautious-update average-gradient bound on a nonconvex problem.

    Constants depend on the run and the admissible alpha on the constants, so
    this measures on a pilot run, shrinks alpha into the measured interval,
    and repeats until the final run's own constants admit its alpha.
    """
    lipschitz = problem.full_lipschitz_bound()
    f_lower = problem.lower_bound
    alpha = alpha0
    constants = None
    res = None
    for round_idx in range(1, max_rounds + 1):
        cfg = SolverConfig(method="robust_lbfgs", alpha=alpha, m=m, epsilon=epsilon,
                           cautious=True, strategy="subsample", r=r, o=o,
                           max_iters=horizon, seed=seed, eval_every=1)
        res = run(problem, cfg, snapshot_hessians=True)
        if res.diverged:
            alpha *= 0.1
            continue
        mu1, mu2 = measure_hessian_eigen_bounds(res.hessian_snapshots, problem.d)
        # hess_min is meaningless without strong convexity; only hess_max
        # (the Lipschitz constant) enters the nonconvex bound.
        constants = TheoremConstants(
            hess_min=lipschitz, hess_max=lipschitz, approx_min=mu1, approx_max=mu2,
            grad_bound=measured_grad_bound([res]), grad_growth=grad_growth,
            f_lower=f_lower)
        alpha_max = nonconvex_alpha_interval(constants)
        if alpha < alpha_max:
            gap0 = res.records[0].F_full - f_lower
            bound = nonconvex_bound(constants, gap0, alpha, horizon)
            sq = np.array([rec.grad_norm_full for rec in res.records[:horizon]]) ** 2
            mean_sq = float(sq.mean())
            return NonconvexAverageReport(
                applicable=True, passed=mean_sq <= bound, alpha=alpha,
                alpha_max=alpha_max, constants=constants, gap0=gap0,
                bound=bound, mean_sq_grad=mean_sq, rounds=round_idx)
        alpha = 0.5 * alpha_max
    return NonconvexAverageReport(
        applicable=False, passed=False, alpha=alpha,
        alpha_max=nonconvex_alpha_interval(constants) if constants else np.nan,
        constants=constants, gap0=None, bound=None, mean_sq_grad=None,
        rounds=max_rounds)


def finite_difference_gradient(problem: Problem, w: np.ndarray, indices=None,
                               step: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of F^S, one coordinate at a time."""
    idx = problem.full_indices() if indices is None else indices
    w = np.asarray(w, dtype=np.float64)
    grad = np.empty(problem.d)
    for j in range(problem.d):
        probe = np.zeros(problem.d)
        probe[j] = step
        up = problem.evaluate(w + probe, idx).value
        down = problem.evaluate(w - probe, idx).value
        grad[j] = (up - down) / (2.0 * step)
    return grad
