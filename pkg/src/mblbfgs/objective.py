"""Batch objective/gradient evaluation for the supported problems.

Every problem decomposes as F(w) = (1/n) sum_i f_i(w) so that arbitrary index
sets can be averaged; the L2 regularizer of the logistic problem is added to
every batch evaluation, keeping each sub-sampled function strongly convex.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .data import Dataset


@dataclass
class BatchEval:
    """Value and gradient of F^S at one point."""

    value: float
    gradient: np.ndarray
    sample_count: int


class Problem:
    """Base class: chunked, bit-deterministic batch evaluation.

    Subclasses implement `_sums(w, idx)` returning the un-normalized
    (value_sum, gradient_sum) over the given examples, and may override
    `_regularizer` to add a deterministic term to every evaluation.
    """

    kind: str
    n: int
    d: int

    def _sums(self, w: np.ndarray, idx: np.ndarray) -> tuple[float, np.ndarray]:
        raise NotImplementedError

    def _regularizer(self, w: np.ndarray) -> tuple[float, np.ndarray | None]:
        return 0.0, None

    def evaluate(self, w: np.ndarray, indices, chunk_count: int = 1) -> BatchEval:
        """Average value/gradient over `indices`.

        The index set is split into `chunk_count` contiguous chunks whose
        partial sums are combined in chunk order, so the result is
        bit-deterministic for a fixed chunk count (chunks may be evaluated on
        worker threads).
        """
        w = np.asarray(w, dtype=np.float64)
        if w.shape != (self.d,):
            raise ValueError(f"w has shape {w.shape}, expected ({self.d},)")
        idx = np.asarray(indices, dtype=np.int64).ravel()
        if idx.size == 0:
            raise ValueError("index set must be nonempty")
        if idx.min() < 0 or idx.max() >= self.n:
            raise ValueError("index out of range")
        if chunk_count < 1:
            raise ValueError("chunk_count must be >= 1")

        chunks = np.array_split(idx, min(chunk_count, idx.size))
        if len(chunks) == 1:
            value_sum, grad_sum = self._sums(w, chunks[0])
        else:
            with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
                partials = list(pool.map(lambda c: self._sums(w, c), chunks))
            value_sum, grad_sum = partials[0]
            grad_sum = grad_sum.copy()
            for v, g in partials[1:]:
                value_sum += v
                grad_sum += g

        scale = 1.0 / idx.size
        value = value_sum * scale
        gradient = grad_sum * scale
        reg_value, reg_grad = self._regularizer(w)
        if reg_grad is not None:
            value += reg_value
            gradient += reg_grad
        return BatchEval(value=float(value), gradient=gradient, sample_count=idx.size)

    def full_indices(self) -> np.ndarray:
        return np.arange(self.n, dtype=np.int64)

    def evaluate_full(self, w: np.ndarray, chunk_count: int = 1) -> BatchEval:
        return self.evaluate(w, self.full_indices(), chunk_count=chunk_count)


def full_gradient_norm(problem: Problem, w: np.ndarray, chunk_count: int = 1) -> float:
    """Euclidean norm of the full-dataset gradient at w."""
    return float(np.linalg.norm(problem.evaluate_full(w, chunk_count=chunk_count).gradient))


class LogisticProblem(Problem):
    """L2-regularized binary logistic regression on a sparse Dataset.

    F^S(w) = (1/|S|) sum_{i in S} log(1 + exp(-y_i x_i^T w)) + (sigma/2) ||w||^2.
    The log term is computed as logaddexp(0, -z), which is stable for any
    margin sign.
    """

    kind = "logistic_l2"

    def __init__(self, dataset: Dataset, sigma: float | None = None):
        if sigma is not None and sigma < 0:
            raise ValueError("sigma must be >= 0")
        self.dataset = dataset
        self.n = dataset.n
        self.d = dataset.d
        self.sigma = (1.0 / dataset.n) if sigma is None else float(sigma)
        self._X = dataset.matrix()
        self._y = dataset.labels

    def _sums(self, w, idx):
        X = self._X[idx]
        y = self._y[idx]
        z = y * (X @ w)
        value_sum = float(np.logaddexp(0.0, -z).sum())
        coef = -y * expit(-z)
        grad_sum = X.T @ coef
        return value_sum, np.asarray(grad_sum)

    def _regularizer(self, w):
        return 0.5 * self.sigma * float(w @ w), self.sigma * w

    def hessian_upper_bound(self) -> float:
        """Valid for every subset O: eig(hess F^O) <= max_i ||x_i||^2 / 4 + sigma."""
        sq = self._X.multiply(self._X).sum(axis=1)
        max_row = float(np.max(sq)) if self.n else 0.0
        return 0.25 * max_row + self.sigma

    def hessian_lower_bound(self) -> float:
        return self.sigma

    def overlap_lipschitz_bound(self) -> float:
        return self.hessian_upper_bound()

    def full_lipschitz_bound(self) -> float:
        return self.hessian_upper_bound()


class QuadraticProblem(Problem):
    """Strongly convex quadratic with known spectrum and optional batch noise.

    F(w) = 1/2 (w - w*)^T A (w - w*) with A = Q diag(eigenvalues) Q^T for a
    seeded orthogonal Q (A = lambda*I exactly when all eigenvalues are equal).
    Components are f_i(w) = F(w) + b_i^T (w - w*) with sum_i b_i = 0, so every
    subset Hessian equals A exactly, the full gradient is A (w - w*), and batch
    gradients carry zero-mean sampling noise of size `noise_scale`.
    """

    kind = "quadratic"

    def __init__(
        self,
        eigenvalues,
        n_examples: int,
        w_star: np.ndarray | None = None,
        seed: int = 0,
        noise_scale: float = 1.0,
    ):
        eigs = np.asarray(eigenvalues, dtype=np.float64)
        if eigs.ndim != 1 or eigs.size == 0:
            raise ValueError("eigenvalues must be a nonempty 1-d sequence")
        if np.any(eigs <= 0):
            raise ValueError("all eigenvalues must be strictly positive")
        if n_examples < 1:
            raise ValueError("n_examples must be >= 1")

        self.n = int(n_examples)
        self.d = eigs.size
        self.eigenvalues = np.sort(eigs)
        rng = np.random.default_rng(seed)
        if np.ptp(eigs) == 0.0:
            self.A = np.diag(np.full(self.d, eigs[0]))
        else:
            q, r = np.linalg.qr(rng.standard_normal((self.d, self.d)))
            q *= np.sign(np.diag(r))
            self.A = (q * eigs) @ q.T
            self.A = 0.5 * (self.A + self.A.T)
        self.w_star = np.zeros(self.d) if w_star is None else np.asarray(w_star, dtype=np.float64)
        if self.w_star.shape != (self.d,):
            raise ValueError("w_star has wrong dimension")
        noise = noise_scale * rng.standard_normal((self.n, self.d))
        self.noise = noise - noise.mean(axis=0)

    def _sums(self, w, idx):
        z = w - self.w_star
        az = self.A @ z
        core = 0.5 * float(z @ az)
        b = self.noise[idx]
        value_sum = idx.size * core + float((b @ z).sum())
        grad_sum = idx.size * az + b.sum(axis=0)
        return value_sum, grad_sum

    @property
    def lambda_min(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def lambda_max(self) -> float:
        return float(self.eigenvalues[-1])

    @property
    def f_star(self) -> float:
        return 0.0

    def overlap_lipschitz_bound(self) -> float:
        return self.lambda_max

    def full_lipschitz_bound(self) -> float:
        return self.lambda_max


class CauchyProblem(Problem):
    """Nonconvex robust-regression test problem bounded below by 0.

    F(w) = (1/n) sum_i log(1 + (a_i^T w - b_i)^2) with seeded Gaussian a_i,
    b_i. Every component is nonnegative, so the lower bound is exactly 0.
    """

    kind = "nonconvex_cauchy"

    def __init__(self, n_examples: int, d: int, seed: int = 0, target_scale: float = 1.0):
        if n_examples < 1 or d < 1:
            raise ValueError("n_examples and d must be >= 1")
        self.n = int(n_examples)
        self.d = int(d)
        rng = np.random.default_rng(seed)
        self.features = rng.standard_normal((self.n, self.d))
        self.targets = target_scale * rng.standard_normal(self.n)

    def _sums(self, w, idx):
        r = self.features[idx] @ w - self.targets[idx]
        value_sum = float(np.log1p(r * r).sum())
        coef = 2.0 * r / (1.0 + r * r)
        grad_sum = self.features[idx].T @ coef
        return value_sum, grad_sum

    @property
    def lower_bound(self) -> float:
        return 0.0

    def overlap_lipschitz_bound(self) -> float:
        """|phi''| <= 2 for phi(t) = log(1 + t^2), so 2 max_i ||a_i||^2 works for every subset."""
        return 2.0 * float(np.max(np.einsum("ij,ij->i", self.features, self.features)))

    def full_lipschitz_bound(self) -> float:
        """Tighter full-average bound: 2 lambda_max(A^T A / n)."""
        gram = self.features.T @ self.features / self.n
        return 2.0 * float(np.linalg.eigvalsh(gram)[-1])
