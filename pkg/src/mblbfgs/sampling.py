"""Per-iteration batch plans: overlapped partition, independent subsample, and
simulated node failures.

All samplers are deterministic sequential generators: identical parameters and
seed yield an identical plan stream. An empty O_next on a plan tells the
solver to skip the quasi-Newton update across that boundary (epoch reshuffles,
node repartitions, or no commonly surviving node).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

_EMPTY = np.empty(0, dtype=np.int64)


@dataclass
class BatchPlan:
    """Index sets for one iteration.

    O_prev mirrors the previous plan's O_next; O_next is the overlap shared
    with (partition/fault) or designated for (subsample) the next plan. epoch
    is the shuffle-pass index for the partition strategy and None elsewhere.
    """

    k: int
    S: np.ndarray
    O_prev: np.ndarray = field(default_factory=lambda: _EMPTY)
    O_next: np.ndarray = field(default_factory=lambda: _EMPTY)
    epoch: int | None = None


def batch_sizes(n: int, r: float, o: float) -> tuple[int, int]:
    """Resolve (|S|, |O|) from the batch and overlap fractions."""
    if not 0 < r <= 1:
        raise ValueError("r must lie in (0, 1]")
    if not 0 <= o < 1:
        raise ValueError("o must lie in [0, 1)")
    s_size = int(round(r * n))
    if s_size < 2:
        raise ValueError(f"batch size round(r*n) = {s_size} must be >= 2")
    o_size = max(1, int(round(o * s_size)))
    if o_size >= s_size:
        raise ValueError(f"overlap size {o_size} must be smaller than batch size {s_size}")
    return s_size, o_size


def partition_sampler(n: int, r: float, o: float, seed) -> Iterator[BatchPlan]:
    """Consecutive overlapping blocks of a per-epoch shuffle.

    Each epoch shuffles {0..n-1} and lays out blocks of size |S| advancing by
    |S| - |O|, so consecutive batches share exactly the trailing |O| positions
    and every index is used at least once per epoch. The final block is
    truncated at the end of the permutation and declares no overlap into the
    reshuffled next epoch.
    """
    s_size, o_size = batch_sizes(n, r, o)
    stride = s_size - o_size
    rng = np.random.default_rng(seed)

    k = 0
    epoch = 0
    o_prev = _EMPTY
    while True:
        perm = rng.permutation(n).astype(np.int64)
        start = 0
        while start < n:
            stop = start + s_size
            S = perm[start:stop]
            last = stop >= n
            o_next = _EMPTY if last else S[-o_size:]
            yield BatchPlan(k=k, S=S, O_prev=o_prev, O_next=o_next, epoch=epoch)
            k += 1
            o_prev = o_next
            if last:
                break
            start += stride
        epoch += 1


def subsample_sampler(n: int, r: float, o: float, seed) -> Iterator[BatchPlan]:
    """Independent batches: S_k uniform without replacement from {0..n-1},
    O_k uniform without replacement from S_k. O_k need not meet S_{k+1}, so
    the overlap gradient at the next iterate costs extra evaluations."""
    s_size, o_size = batch_sizes(n, r, o)
    rng = np.random.default_rng(seed)

    k = 0
    o_prev = _EMPTY
    while True:
        S = rng.choice(n, size=s_size, replace=False).astype(np.int64)
        o_next = rng.choice(S, size=o_size, replace=False).astype(np.int64)
        yield BatchPlan(k=k, S=S, O_prev=o_prev, O_next=o_next)
        k += 1
        o_prev = o_next


@dataclass
class NodePartition:
    """Disjoint per-node data blocks plus the per-iteration failure rate."""

    K: int
    node_batches: list[np.ndarray]
    p: float
    seed: int

    def __post_init__(self):
        if self.K < 1 or len(self.node_batches) != self.K:
            raise ValueError("node_batches must hold K blocks")
        if not 0 <= self.p < 1:
            raise ValueError("p must lie in [0, 1)")
        combined = np.concatenate([np.asarray(b, dtype=np.int64) for b in self.node_batches])
        if combined.size == 0:
            raise ValueError("partition covers no indices")
        universe = np.sort(combined)
        if universe.size != np.unique(universe).size or universe[0] != 0 or universe[-1] != universe.size - 1:
            raise ValueError("node blocks must be disjoint and cover {0..n-1}")
        self.n = int(universe.size)

    @classmethod
    def create(cls, n: int, K: int, p: float, seed: int) -> "NodePartition":
        """Shuffle {0..n-1} and split into K blocks of size within +-1."""
        if K > n:
            raise ValueError("more nodes than examples")
        perm = np.random.default_rng(seed).permutation(n).astype(np.int64)
        return cls(K=K, node_batches=np.array_split(perm, K), p=p, seed=seed)


def shuffle_redistribute(partition: NodePartition, seed) -> NodePartition:
    """New partition with the same K and p over a reshuffled index universe."""
    perm = np.random.default_rng(seed).permutation(partition.n).astype(np.int64)
    return NodePartition(
        K=partition.K,
        node_batches=np.array_split(perm, partition.K),
        p=partition.p,
        seed=partition.seed,
    )


def fault_sampler(partition: NodePartition, redistribute_every: int | None = None) -> Iterator[BatchPlan]:
    """Union-of-surviving-blocks batches under independent node failures.

    Each iteration every node fails with probability p (an all-failed draw is
    redrawn, modeling a retried round). S_k is the union of surviving blocks
    and O_k the union of blocks surviving both rounds k and k+1; when no node
    survives both, the plan declares an empty overlap. With
    `redistribute_every = E`, the data is reshuffled across nodes every E
    iterations and the overlap across that boundary is likewise declared
    empty.
    """
    if redistribute_every is not None and redistribute_every < 1:
        raise ValueError("redistribute_every must be >= 1")
    rng = np.random.default_rng(partition.seed)

    def draw_alive() -> np.ndarray:
        while True:
            alive = rng.random(partition.K) >= partition.p
            if alive.any():
                return alive

    def union(blocks: NodePartition, mask: np.ndarray) -> np.ndarray:
        picked = [blocks.node_batches[j] for j in np.flatnonzero(mask)]
        return np.sort(np.concatenate(picked)).astype(np.int64)

    current = partition
    alive = draw_alive()
    k = 0
    o_prev = _EMPTY
    while True:
        boundary = redistribute_every is not None and (k + 1) % redistribute_every == 0
        nxt = shuffle_redistribute(current, rng.integers(2**63)) if boundary else current
        alive_next = draw_alive()
        S = union(current, alive)
        both = alive & alive_next
        o_next = _EMPTY if (boundary or not both.any()) else union(current, both)
        yield BatchPlan(k=k, S=S, O_prev=o_prev, O_next=o_next)
        k += 1
        o_prev = o_next
        current = nxt
        alive = alive_next
