"""L-BFGS curvature memory, two-loop recursion, and dense-matrix oracles.

The memory stores (s, y, rho) pairs FIFO and scales the initial matrix by the
newest pair's s^T y / y^T y. Updates can be refused either by the cautious
rule y^T s >= epsilon ||s||^2 or by a bare positive-curvature guard, which
reproduces the unguarded baseline without ever dividing by a non-positive
y^T s.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

DENSE_DIM_LIMIT = 2048


@dataclass
class CurvaturePair:
    s: np.ndarray
    y: np.ndarray
    rho: float


class LbfgsMemory:
    """FIFO buffer of curvature pairs plus the initial-matrix scaling."""

    def __init__(self, capacity: int):
        if capacity < 0:
            raise ValueError("capacity must be >= 0")
        self.capacity = capacity
        self.pairs: deque[CurvaturePair] = deque()
        self.h0_scale = 1.0

    def __len__(self) -> int:
        return len(self.pairs)

    @property
    def dim(self) -> int | None:
        return self.pairs[0].s.size if self.pairs else None

    def try_update(self, s: np.ndarray, y: np.ndarray, epsilon: float | None = None,
                   cautious: bool = False) -> bool:
        """Store (s, y) if the curvature test passes; returns True on acceptance.

        Cautious mode requires y^T s >= epsilon ||s||^2; otherwise only
        y^T s > 0 (with a tiny scaled guard against overflowing 1/y^T s).
        Degenerate or non-finite inputs are skipped, never raised. A skipped
        update leaves the memory, including h0_scale, untouched.
        """
        s = np.asarray(s, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if s.shape != y.shape or s.ndim != 1:
            raise ValueError("s and y must be 1-d vectors of equal length")
        if self.pairs and s.size != self.pairs[0].s.size:
            raise ValueError("pair dimension does not match stored pairs")
        if not (np.isfinite(s).all() and np.isfinite(y).all()):
            return False

        ys = float(y @ s)
        ss = float(s @ s)
        if cautious:
            if epsilon is None or epsilon <= 0:
                raise ValueError("cautious updating needs epsilon > 0")
            if ss == 0.0 or ys < epsilon * ss:
                return False
        else:
            guard = 1e-300 * float(np.linalg.norm(s)) * float(np.linalg.norm(y))
            if ys <= guard:
                return False

        yy = float(y @ y)
        if self.capacity == 0:
            # Accepted but nothing stored; h0 stays at the no-pair default.
            self.h0_scale = 1.0
            return True
        if len(self.pairs) == self.capacity:
            self.pairs.popleft()
        self.pairs.append(CurvaturePair(s=s.copy(), y=y.copy(), rho=1.0 / ys))
        self.h0_scale = ys / yy
        return True

    def snapshot(self) -> "LbfgsMemory":
        """Cheap frozen copy for monitoring; pair vectors are shared, never mutated."""
        copy = LbfgsMemory(self.capacity)
        copy.pairs = deque(self.pairs)
        copy.h0_scale = self.h0_scale
        return copy


def two_loop_direction(memory: LbfgsMemory, g: np.ndarray) -> np.ndarray:
    """Return p = -H g via the two-loop recursion, never forming H.

    H applies the stored pairs (oldest to newest) to H0 = h0_scale * I.
    """
    g = np.asarray(g, dtype=np.float64)
    if g.ndim != 1:
        raise ValueError("g must be a 1-d vector")
    if memory.pairs and g.size != memory.pairs[0].s.size:
        raise ValueError("gradient dimension does not match stored pairs")

    q = g.copy()
    alphas = []
    for pair in reversed(memory.pairs):
        a = pair.rho * float(pair.s @ q)
        q -= a * pair.y
        alphas.append(a)
    r = memory.h0_scale * q
    for pair, a in zip(memory.pairs, reversed(alphas)):
        b = pair.rho * float(pair.y @ r)
        r += (a - b) * pair.s
    return -r


def _check_dense_dim(memory: LbfgsMemory, d: int) -> None:
    if d > DENSE_DIM_LIMIT:
        raise ValueError(f"dense oracle refused for d = {d} > {DENSE_DIM_LIMIT} (monitor use only)")
    if memory.pairs and memory.pairs[0].s.size != d:
        raise ValueError("d does not match stored pair dimension")


def dense_inverse_hessian(memory: LbfgsMemory, d: int) -> np.ndarray:
    """Explicit H from H_{j+1} = V_j^T H_j V_j + rho_j s_j s_j^T, oldest pair first."""
    _check_dense_dim(memory, d)
    H = memory.h0_scale * np.eye(d)
    for pair in memory.pairs:
        V = np.eye(d) - pair.rho * np.outer(pair.y, pair.s)
        H = V.T @ H @ V + pair.rho * np.outer(pair.s, pair.s)
    return H


def dense_direct_hessian(memory: LbfgsMemory, d: int) -> np.ndarray:
    """Explicit B = H^{-1} via the direct recursion from B0 = I / h0_scale."""
    _check_dense_dim(memory, d)
    B = np.eye(d) / memory.h0_scale
    for pair in memory.pairs:
        Bs = B @ pair.s
        B = B - np.outer(Bs, Bs) / float(pair.s @ Bs) + np.outer(pair.y, pair.y) * pair.rho
    return B
