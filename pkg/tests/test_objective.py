import itertools

import numpy as np
import pytest
from numpy.testing import assert_allclose

from mblbfgs.analysis import finite_difference_gradient
from mblbfgs.data import SyntheticSpec, generate_synthetic
from mblbfgs.objective import CauchyProblem, LogisticProblem, QuadraticProblem, full_gradient_norm


def small_logistic(n=20, d=8, seed=0, sigma=None):
    ds = generate_synthetic(SyntheticSpec(n=n, d=d, nnz_per_row=4, seed=seed))
    return LogisticProblem(ds, sigma=sigma)


def test_logistic_value_and_gradient_at_zero():
    problem = small_logistic(sigma=0.0)
    S = np.array([0, 3, 5, 7])
    ev = problem.evaluate(np.zeros(problem.d), S)
    assert_allclose(ev.value, np.log(2), rtol=1e-15)
    X = problem.dataset.matrix().toarray()
    expected = -(problem.dataset.labels[S, None] * X[S]).sum(axis=0) / (2 * S.size)
    assert_allclose(ev.gradient, expected, atol=1e-15)


def test_quadratic_identity_example():
    problem = QuadraticProblem(np.ones(4), n_examples=10, seed=0, noise_scale=0.0)
    w = np.zeros(4)
    w[0] = 1.0
    ev = problem.evaluate(w, np.arange(10))
    assert ev.value == 0.5
    assert_allclose(ev.gradient, w, atol=0)


def test_logistic_gradient_matches_finite_differences():
    rng = np.random.default_rng(42)
    for _ in range(5):
        problem = small_logistic(n=25, d=6, seed=int(rng.integers(1000)))
        w = rng.standard_normal(6)
        S = rng.choice(25, size=10, replace=False)
        exact = problem.evaluate(w, S).gradient
        approx = finite_difference_gradient(problem, w, S, step=1e-5)
        rel = np.linalg.norm(approx - exact) / np.linalg.norm(exact)
        assert rel <= 1e-6


def test_cauchy_gradient_matches_finite_differences():
    rng = np.random.default_rng(5)
    problem = CauchyProblem(n_examples=30, d=7, seed=9)
    w = rng.standard_normal(7)
    exact = problem.evaluate(w, np.arange(30)).gradient
    approx = finite_difference_gradient(problem, w, step=1e-5)
    assert np.linalg.norm(approx - exact) / np.linalg.norm(exact) <= 1e-6


def test_full_gradient_norm_on_quadratic():
    problem = QuadraticProblem(np.ones(5), n_examples=8, seed=1, noise_scale=0.0)
    assert full_gradient_norm(problem, np.zeros(5)) == 0.0
    w = np.zeros(5)
    w[0] = 1.0
    assert_allclose(full_gradient_norm(problem, w), 1.0, rtol=1e-15)


def test_full_gradient_norm_matches_per_example_sum():
    problem = small_logistic(n=4, d=5, seed=3)
    w = np.random.default_rng(7).standard_normal(5)
    # Single-example evaluations each carry the regularizer once; strip it,
    # average the raw loss gradients, and add it back.
    loss_grads = [problem.evaluate(w, [i]).gradient - problem.sigma * w for i in range(4)]
    brute = np.mean(loss_grads, axis=0) + problem.sigma * w
    assert_allclose(full_gradient_norm(problem, w), np.linalg.norm(brute), rtol=1e-12)


def test_batch_gradient_unbiased_over_all_subsets():
    problem = small_logistic(n=6, d=5, seed=4)
    w = np.random.default_rng(11).standard_normal(5)
    full = problem.evaluate(w, np.arange(6)).gradient
    for size in (2, 3):
        subsets = list(itertools.combinations(range(6), size))
        avg = np.mean([problem.evaluate(w, list(s)).gradient for s in subsets], axis=0)
        assert_allclose(avg, full, atol=1e-12)


def test_quadratic_full_gradient_exact_matrix_product():
    problem = QuadraticProblem(np.linspace(1, 10, 6), n_examples=50, seed=2, noise_scale=1.5)
    rng = np.random.default_rng(0)
    for _ in range(5):
        w = rng.standard_normal(6)
        grad = problem.evaluate(w, np.arange(50)).gradient
        assert_allclose(grad, problem.A @ (w - problem.w_star), atol=1e-12)


def test_quadratic_subset_hessian_is_exact():
    problem = QuadraticProblem(np.linspace(1, 10, 5), n_examples=30, seed=8, noise_scale=2.0)
    rng = np.random.default_rng(1)
    S = rng.choice(30, size=7, replace=False)
    w1 = rng.standard_normal(5)
    w2 = rng.standard_normal(5)
    g1 = problem.evaluate(w1, S).gradient
    g2 = problem.evaluate(w2, S).gradient
    # Linear noise terms cancel in gradient differences on a fixed subset.
    assert_allclose(g2 - g1, problem.A @ (w2 - w1), atol=1e-12)


def test_cauchy_nonnegative_everywhere():
    problem = CauchyProblem(n_examples=50, d=6, seed=12)
    rng = np.random.default_rng(3)
    for _ in range(1000):
        w = 3.0 * rng.standard_normal(6)
        assert problem.evaluate(w, np.arange(50)).value >= 0.0
    assert problem.lower_bound == 0.0


def test_logistic_stable_at_huge_margins():
    problem = small_logistic(sigma=0.0)
    w = 1e4 * np.ones(problem.d)
    ev = problem.evaluate(w, np.arange(problem.n))
    assert np.isfinite(ev.value)
    assert np.isfinite(ev.gradient).all()


def test_evaluate_validates_inputs():
    problem = small_logistic()
    with pytest.raises(ValueError):
        problem.evaluate(np.zeros(problem.d), [])
    with pytest.raises(ValueError):
        problem.evaluate(np.zeros(problem.d), [problem.n])
    with pytest.raises(ValueError):
        problem.evaluate(np.zeros(problem.d + 1), [0])


def test_chunked_evaluation_bit_deterministic():
    problem = small_logistic(n=101, d=13, seed=6)
    w = np.random.default_rng(5).standard_normal(13)
    idx = np.arange(101)
    base = problem.evaluate(w, idx, chunk_count=4)
    again = problem.evaluate(w, idx, chunk_count=4)
    assert base.value == again.value
    np.testing.assert_array_equal(base.gradient, again.gradient)
    # Different chunking is allowed to differ only in float rounding.
    other = problem.evaluate(w, idx, chunk_count=1)
    assert_allclose(other.gradient, base.gradient, rtol=1e-12)


def test_quadratic_rejects_nonpositive_eigenvalues():
    with pytest.raises(ValueError):
        QuadraticProblem([1.0, 0.0], n_examples=5)
    with pytest.raises(ValueError):
        QuadraticProblem([1.0, -2.0], n_examples=5)
