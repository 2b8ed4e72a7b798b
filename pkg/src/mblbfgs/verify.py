"""Named pass/fail checks pairing each core computation with an independent oracle."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import analysis
from .data import Dataset, SyntheticSpec, generate_synthetic
from .lbfgs import LbfgsMemory, dense_inverse_hessian, two_loop_direction
from .objective import CauchyProblem, LogisticProblem, QuadraticProblem
from .sampling import NodePartition, fault_sampler, partition_sampler, subsample_sampler
from .solver import SolverConfig, run


@dataclass
class CheckResult:
    name: str
    passed: bool
    details: dict[str, float] = field(default_factory=dict)

    def describe(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        parts = ", ".join(f"{k}={v:.6g}" for k, v in self.details.items())
        return f"[{status}] {self.name}: {parts}"


def random_accepted_memory(rng: np.random.Generator, d: int, m: int) -> LbfgsMemory:
    """Memory filled with random pairs that clear the positive-curvature test.

    Rejection keeps y^T s above a hundredth of ||s|| ||y|| so the resulting
    matrices stay reasonably conditioned for oracle comparisons.
    """
    memory = LbfgsMemory(m)
    stored = 0
    while stored < m:
        s = rng.standard_normal(d)
        y = rng.standard_normal(d)
        if float(y @ s) <= 0.01 * np.linalg.norm(s) * np.linalg.norm(y):
            continue
        if memory.try_update(s, y):
            stored += 1
    return memory


def check_gradient(instances: int = 20, n_max: int = 200, d_max: int = 50,
                   step: float = 1e-5, tol: float = 1e-6, seed: int = 0) -> CheckResult:
    """Analytic logistic gradients against central finite differences."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        n = int(rng.integers(20, n_max + 1))
        d = int(rng.integers(3, d_max + 1))
        nnz = int(rng.integers(1, min(d, 12) + 1))
        data = generate_synthetic(SyntheticSpec(n=n, d=d, nnz_per_row=nnz, seed=int(rng.integers(2**31))))
        problem = LogisticProblem(data)
        w = 0.5 * rng.standard_normal(d)
        size = int(rng.integers(1, n + 1))
        idx = rng.choice(n, size=size, replace=False)
        exact = problem.evaluate(w, idx).gradient
        approx = analysis.finite_difference_gradient(problem, w, idx, step=step)
        rel = float(np.linalg.norm(approx - exact) / max(np.linalg.norm(exact), 1e-30))
        worst = max(worst, rel)
    return CheckResult("gradient", worst <= tol,
                       {"instances": instances, "max_rel_error": worst, "tol": tol})


def check_two_loop(histories: int = 100, d_max: int = 50, m_max: int = 10,
                   tol: float = 1e-10, seed: int = 0) -> CheckResult:
    """Two-loop recursion against the dense inverse-Hessian product."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(histories):
        d = int(rng.integers(2, d_max + 1))
        m = int(rng.integers(0, m_max + 1))
        memory = random_accepted_memory(rng, d, m)
        g = rng.standard_normal(d)
        fast = two_loop_direction(memory, g)
        dense = -dense_inverse_hessian(memory, d) @ g
        rel = float(np.linalg.norm(fast - dense) / max(np.linalg.norm(dense), 1e-30))
        worst = max(worst, rel)
    return CheckResult("two-loop", worst <= tol,
                       {"histories": histories, "max_rel_deviation": worst, "tol": tol})


def make_reference_quadratic(d: int = 10, n: int = 500, lo: float = 1.0, hi: float = 10.0,
                             seed: int = 3, noise_scale: float = 1.0) -> QuadraticProblem:
    """Quadratic whose every subset Hessian has spectrum exactly [lo, hi]."""
    eigs = np.linspace(lo, hi, d)
    rng = np.random.default_rng(seed)
    return QuadraticProblem(eigs, n_examples=n, w_star=rng.standard_normal(d),
                            seed=seed, noise_scale=noise_scale)


def check_curvature(iters: int = 1000, tol: float = 1e-8, seed: int = 0) -> CheckResult:
    """Accepted-pair curvature ratios against the exact overlap-Hessian spectrum.

    On the reference quadratic every overlap Hessian is exactly A, so each
    accepted pair must satisfy lo <= ||y||^2 / y^T s <= hi.
    """
    problem = make_reference_quadratic()
    cfg = SolverConfig(method="robust_lbfgs", alpha=0.1, m=10, strategy="partition",
                       r=0.1, o=0.2, max_iters=iters, seed=seed)
    res = run(problem, cfg)
    accepted = [ev for ev in res.pair_log if ev.accepted]
    ratios = np.array([ev.yy / ev.ys for ev in accepted])
    lo, hi = problem.lambda_min, problem.lambda_max
    ok = bool(ratios.size) and bool(np.all(ratios >= lo - tol) and np.all(ratios <= hi + tol))
    return CheckResult("curvature", ok, {
        "accepted_pairs": float(ratios.size),
        "min_ratio": float(ratios.min()) if ratios.size else np.nan,
        "max_ratio": float(ratios.max()) if ratios.size else np.nan,
        "spectrum_lo": lo, "spectrum_hi": hi, "tol": tol})


def check_convex_bound(n_seeds: int = 10, k_max: int = 2000, alpha: float = 0.1,
                       d: int = 10, n: int = 1000, r: float = 0.05, o: float = 0.2,
                       seed: int = 5) -> CheckResult:
    """Neighborhood-of-convergence bound on the reference quadratic."""
    problem = make_reference_quadratic(d=d, n=n, seed=seed)
    cfg = SolverConfig(method="robust_lbfgs", alpha=alpha, m=10, strategy="subsample",
                       r=r, o=o, max_iters=k_max, seed=1)
    report = analysis.check_convex_neighborhood(problem, cfg, n_seeds=n_seeds)
    details = {"applicable": float(report.applicable), "alpha": report.alpha,
               "alpha_max": report.alpha_max, "n_seeds": float(n_seeds)}
    if report.applicable:
        details.update({
            "approx_min": report.constants.approx_min,
            "approx_max": report.constants.approx_max,
            "grad_bound": report.constants.grad_bound,
            "limit_value": report.limit_value,
            "final_mean_gap": float(report.mean_gap[-1]),
        })
    return CheckResult("convex-bound", report.passed, details)


def check_nonconvex_bound(horizon: int = 5000, epsilon: float = 1e-4, d: int = 10,
                          n: int = 1000, seed: int = 7) -> CheckResult:
    """Average-squared-gradient bound under cautious updating."""
    problem = CauchyProblem(n_examples=n, d=d, seed=seed)
    report = analysis.check_nonconvex_average(problem, epsilon=epsilon, horizon=horizon, seed=1)
    details = {"applicable": float(report.applicable), "alpha": report.alpha,
               "alpha_max": report.alpha_max, "rounds": float(report.rounds)}
    if report.applicable:
        details.update({"bound": report.bound, "mean_sq_grad": report.mean_sq_grad,
                        "approx_min": report.constants.approx_min,
                        "approx_max": report.constants.approx_max})
    return CheckResult("nonconvex-bound", report.applicable and report.passed, details)


def _overlap_identities(plans) -> tuple[int, int]:
    """Count declared overlaps and how many match exact set intersection."""
    declared = 0
    matched = 0
    for prev, nxt in zip(plans, plans[1:]):
        if prev.O_next.size:
            declared += 1
            inter = np.intersect1d(prev.S, nxt.S)
            if np.array_equal(np.sort(prev.O_next), inter) and np.array_equal(prev.O_next, nxt.O_prev):
                matched += 1
        elif nxt.O_prev.size:
            return declared, -1
    return declared, matched


def check_samplers(iters: int = 1000, draws: int = 10000, seed: int = 0) -> CheckResult:
    """Set identities, epoch coverage, and fault-survival statistics."""
    n = 1000
    details: dict[str, float] = {}
    ok = True

    plans = []
    gen = partition_sampler(n, 0.1, 0.2, seed)
    for _ in range(iters):
        plans.append(next(gen))
    declared, matched = _overlap_identities(plans)
    ok &= matched == declared > 0
    details["partition_overlaps"] = float(declared)
    details["partition_identity_ok"] = float(matched == declared)

    epochs = sorted({p.epoch for p in plans})
    covered = True
    for e in epochs[:-1]:
        union = np.unique(np.concatenate([p.S for p in plans if p.epoch == e]))
        covered &= union.size == n and union[0] == 0 and union[-1] == n - 1
    ok &= covered
    details["partition_coverage_ok"] = float(covered)

    K, p = 16, 0.3
    block = 100
    partition = NodePartition.create(K * block, K, p, seed)
    gen = fault_sampler(partition)
    plans = [next(gen) for _ in range(max(iters, draws))]
    declared, matched = _overlap_identities(plans[:iters])
    ok &= matched == declared > 0
    details["fault_overlaps"] = float(declared)
    details["fault_identity_ok"] = float(matched == declared)

    sizes = np.array([pl.S.size for pl in plans[:draws]], dtype=np.float64) / block
    mean_alive = float(sizes.mean())
    ok &= abs(mean_alive - K * (1 - p)) <= 0.2
    details["fault_mean_alive"] = mean_alive
    details["fault_expected_alive"] = K * (1 - p)

    gen = subsample_sampler(100, 0.1, 0.2, seed)
    hits = np.zeros(100)
    for _ in range(draws):
        hits[next(gen).S] += 1
    freq = hits / draws
    ok &= bool(np.all(np.abs(freq - 0.1) <= 0.01))
    details["subsample_freq_min"] = float(freq.min())
    details["subsample_freq_max"] = float(freq.max())

    return CheckResult("samplers", bool(ok), details)


def make_stability_dataset(n: int = 10_000, d: int = 50, nnz: int = 10, seed: int = 101,
                           flip: float = 0.1, spread: float = 2.0) -> Dataset:
    """Ill-conditioned sparse logistic data for the robust-vs-inconsistent comparison.

    Feature j carries scale 10^(spread * (j/(d-1) - 1/2)), so the Hessian
    spectrum decays over orders of magnitude the way scaled real datasets do.
    On such data, curvature pairs differenced across unrelated batches inject
    large errors into the stiff directions, while overlap-consistent pairs
    stay exact subset-Hessian actions. Label flips keep the problem
    non-separable so the gradient noise floor persists near the optimum.
    """
    rng = np.random.default_rng(seed)
    scales = np.logspace(-spread / 2, spread / 2, d)
    hyperplane = rng.standard_normal(d) / scales
    rows = []
    labels = np.empty(n)
    for i in range(n):
        idx = np.sort(rng.choice(d, size=nnz, replace=False))
        val = rng.standard_normal(nnz) * scales[idx]
        label = 1.0 if float(val @ hyperplane[idx]) >= 0 else -1.0
        if flip > 0 and rng.random() < flip:
            label = -label
        rows.append((idx.astype(np.int64), val))
        labels[i] = label
    return Dataset(n=n, d=d, rows=rows, labels=labels)


def final_grad_norms(problem, base_config: SolverConfig, method: str,
                     n_seeds: int) -> tuple[np.ndarray, int]:
    """Final full-gradient norm per seed (inf when diverged) and divergence count."""
    finals = []
    diverged = 0
    for seed in range(1, n_seeds + 1):
        res = run(problem, replace(base_config, method=method, seed=seed))
        finals.append(res.final_grad_norm())
        diverged += res.diverged
    return np.array(finals), diverged


ALL_CHECKS = {
    "gradient": check_gradient,
    "two-loop": check_two_loop,
    "curvature": check_curvature,
    "convex-bound": check_convex_bound,
    "nonconvex-bound": check_nonconvex_bound,
    "samplers": check_samplers,
}
