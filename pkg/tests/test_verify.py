import numpy as np

from mblbfgs.solver import SolverConfig
from mblbfgs.verify import (
    CheckResult,
    check_curvature,
    final_grad_norms,
    make_reference_quadratic,
    make_stability_dataset,
    random_accepted_memory,
)


def test_check_result_describe():
    res = CheckResult("demo", True, {"value": 1.5})
    assert res.describe() == "[PASS] demo: value=1.5"
    assert CheckResult("demo", False).describe().startswith("[FAIL]")


def test_random_accepted_memory_properties():
    rng = np.random.default_rng(0)
    memory = random_accepted_memory(rng, d=9, m=6)
    assert len(memory) == 6
    for pair in memory.pairs:
        assert float(pair.y @ pair.s) > 0


def test_reference_quadratic_spectrum():
    problem = make_reference_quadratic(d=7, n=50, lo=2.0, hi=5.0)
    eigs = np.linalg.eigvalsh(problem.A)
    assert abs(eigs[0] - 2.0) < 1e-10
    assert abs(eigs[-1] - 5.0) < 1e-10


def test_stability_dataset_shape():
    ds = make_stability_dataset(n=200, d=30, nnz=6, seed=1)
    assert ds.n == 200 and ds.d == 30
    assert all(idx.size == 6 for idx, _ in ds.rows)
    assert set(np.unique(ds.labels)) == {-1.0, 1.0}
    again = make_stability_dataset(n=200, d=30, nnz=6, seed=1)
    assert ds == again


def test_final_grad_norms_counts_divergence():
    problem = make_reference_quadratic(d=6, n=100, seed=3)
    base = SolverConfig(method="gradient_descent", alpha=50.0, strategy="subsample",
                        r=1.0, o=0.2, max_iters=400, seed=1)
    finals, diverged = final_grad_norms(problem, base, "gradient_descent", 2)
    assert diverged == 2
    assert np.isinf(finals).all()


def test_check_curvature_smoke():
    result = check_curvature(iters=100)
    assert result.passed
    assert result.details["min_ratio"] >= 1.0 - 1e-8
