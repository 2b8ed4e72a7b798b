"""Fixed-step multi-batch solver loop and its baselines.

One iteration: evaluate the batch gradient, take p = -H g via the two-loop
recursion (or -g for gradient descent), step with fixed alpha, create the next
batch, and attempt a curvature-pair update. The robust method differences
overlap gradients evaluated on the same index set at both iterates; the naive
baseline differences the two step gradients, which come from different
samples; serial SGD steps on one uniformly drawn example.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .lbfgs import LbfgsMemory, two_loop_direction
from .objective import Problem
from .sampling import NodePartition, fault_sampler, partition_sampler, subsample_sampler

METHODS = ("robust_lbfgs", "naive_lbfgs", "gradient_descent", "serial_sgd")
STRATEGIES = ("partition", "subsample", "fault")

DIVERGENCE_VALUE = 1e300


class ConfigError(ValueError):
    pass


@dataclass
class SolverConfig:
    method: str
    alpha: float
    m: int = 10
    epsilon: float = 1e-6
    cautious: bool = False
    strategy: str = "partition"
    r: float = 0.1
    o: float = 0.2
    K: int = 16
    p: float = 0.0
    epochs: int | None = None
    max_iters: int | None = None
    seed: int = 0
    eval_every: int | None = None
    chunk_count: int = 1
    w0_mode: str = "zeros"
    redistribute_every: int | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}")
        if not self.alpha > 0:
            raise ConfigError("alpha must be > 0")
        if self.m < 0:
            raise ConfigError("memory m must be >= 0")
        if self.cautious and not self.epsilon > 0:
            raise ConfigError("cautious updating needs epsilon > 0")
        if (self.epochs is None) == (self.max_iters is None):
            raise ConfigError("set exactly one of epochs and max_iters")
        if self.epochs is not None and self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.max_iters is not None and self.max_iters < 1:
            raise ConfigError("max_iters must be >= 1")
        if self.eval_every is not None and self.eval_every < 1:
            raise ConfigError("eval_every must be >= 1")
        if self.chunk_count < 1:
            raise ConfigError("chunk_count must be >= 1")
        if self.w0_mode not in ("zeros", "seeded_gaussian"):
            raise ConfigError(f"unknown w0_mode {self.w0_mode!r}")
        if self.K < 1:
            raise ConfigError("node count K must be >= 1")
        if not 0 <= self.p < 1:
            raise ConfigError("failure probability p must lie in [0, 1)")


@dataclass
class IterationRecord:
    k: int
    epoch: int
    F_batch: float
    grad_norm_batch: float
    F_full: float | None
    grad_norm_full: float | None
    pair_skipped: bool | None
    batch_size: int
    overlap_size: int
    elapsed_ns: int


@dataclass
class PairEvent:
    """Outcome of one attempted curvature update (dot products, not vectors)."""

    k: int
    accepted: bool
    ys: float
    ss: float
    yy: float


@dataclass
class RunResult:
    records: list[IterationRecord]
    diverged: bool
    w_final: np.ndarray
    pair_log: list[PairEvent] = field(default_factory=list)
    hessian_snapshots: list[LbfgsMemory] | None = None
    w_history: list[np.ndarray] | None = None
    memory: LbfgsMemory | None = None

    def final_grad_norm(self) -> float:
        """Last recorded full-gradient norm; +inf for a diverged run."""
        if self.diverged:
            return np.inf
        for rec in reversed(self.records):
            if rec.grad_norm_full is not None:
                return rec.grad_norm_full
        return np.inf


def initial_point(problem: Problem, mode: str, seed=0) -> np.ndarray:
    if mode == "zeros":
        return np.zeros(problem.d)
    if mode == "seeded_gaussian":
        return np.random.default_rng(seed).standard_normal(problem.d)
    raise ValueError(f"unknown initial-point mode {mode!r}")


def _make_sampler(n: int, config: SolverConfig, seed):
    if config.strategy == "partition":
        return partition_sampler(n, config.r, config.o, seed)
    if config.strategy == "subsample":
        return subsample_sampler(n, config.r, config.o, seed)
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    seed_int = int(seed.generate_state(1, np.uint64)[0])
    partition = NodePartition.create(n, config.K, config.p, seed_int)
    return fault_sampler(partition, redistribute_every=config.redistribute_every)


def _finite(value: float, gradient: np.ndarray) -> bool:
    return np.isfinite(value) and value <= DIVERGENCE_VALUE and np.isfinite(gradient).all()


def run(problem: Problem, config: SolverConfig, snapshot_hessians: bool = False,
        keep_w_history: bool = False) -> RunResult:
    """Run the configured method and return the iteration trace.

    Traces are bitwise reproducible for identical problem and config. A
    non-finite batch value/gradient (or F_batch above 1e300) truncates the
    trace and sets the divergence flag instead of raising.
    """
    if config.strategy == "fault" and config.K > problem.n:
        raise ConfigError("node count K exceeds dataset size")
    if config.method == "serial_sgd":
        return _run_serial_sgd(problem, config, snapshot_hessians, keep_w_history)
    return _run_multibatch(problem, config, snapshot_hessians, keep_w_history)


def _run_multibatch(problem, config, snapshot_hessians, keep_w_history):
    sampler_seed, init_seed = np.random.SeedSequence(config.seed).spawn(2)
    sampler = _make_sampler(problem.n, config, sampler_seed)
    w = initial_point(problem, config.w0_mode, init_seed)
    quasi_newton = config.method in ("robust_lbfgs", "naive_lbfgs")
    memory = LbfgsMemory(config.m if quasi_newton else 0)

    records: list[IterationRecord] = []
    pair_log: list[PairEvent] = []
    snapshots: list[LbfgsMemory] | None = [memory.snapshot()] if snapshot_hessians else None
    w_history: list[np.ndarray] | None = [w.copy()] if keep_w_history else None
    diverged = False
    accesses = 0
    last_epoch = -1
    k = 0

    plan = next(sampler)
    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        g_eval = problem.evaluate(w, plan.S, chunk_count=config.chunk_count)
        while True:
            t0 = time.perf_counter_ns()
            if not _finite(g_eval.value, g_eval.gradient):
                diverged = True
                break
            epoch = plan.epoch if config.strategy == "partition" else accesses // problem.n
            stop = (config.epochs is not None and epoch >= config.epochs) or (
                config.max_iters is not None and k >= config.max_iters
            )
            full_due = (
                k == 0
                or stop
                or (config.eval_every is not None and k % config.eval_every == 0)
                or (config.eval_every is None and epoch > last_epoch)
            )
            F_full = grad_norm_full = None
            if full_due:
                full = problem.evaluate_full(w, chunk_count=config.chunk_count)
                F_full = full.value
                grad_norm_full = float(np.linalg.norm(full.gradient))

            if stop:
                records.append(IterationRecord(
                    k=k, epoch=epoch, F_batch=g_eval.value,
                    grad_norm_batch=float(np.linalg.norm(g_eval.gradient)),
                    F_full=F_full, grad_norm_full=grad_norm_full, pair_skipped=None,
                    batch_size=plan.S.size, overlap_size=plan.O_next.size,
                    elapsed_ns=time.perf_counter_ns() - t0))
                break

            if config.method == "gradient_descent":
                direction = -g_eval.gradient
            else:
                direction = two_loop_direction(memory, g_eval.gradient)
            w_next = w + config.alpha * direction
            next_plan = next(sampler)

            cost = plan.S.size
            skipped = None
            if quasi_newton:
                s = w_next - w
                if config.method == "robust_lbfgs":
                    overlap = plan.O_next
                    if overlap.size:
                        g_o_now = problem.evaluate(w, overlap, chunk_count=config.chunk_count).gradient
                        g_o_next = problem.evaluate(w_next, overlap, chunk_count=config.chunk_count).gradient
                        y = g_o_next - g_o_now
                        if config.strategy == "subsample":
                            cost += overlap.size
                        skipped = not _attempt_update(memory, s, y, config, k, pair_log)
                    else:
                        skipped = True
                    g_next_eval = None
                else:
                    g_next_eval = problem.evaluate(w_next, next_plan.S, chunk_count=config.chunk_count)
                    y = g_next_eval.gradient - g_eval.gradient
                    skipped = not _attempt_update(memory, s, y, config, k, pair_log)
            else:
                g_next_eval = None

            records.append(IterationRecord(
                k=k, epoch=epoch, F_batch=g_eval.value,
                grad_norm_batch=float(np.linalg.norm(g_eval.gradient)),
                F_full=F_full, grad_norm_full=grad_norm_full, pair_skipped=skipped,
                batch_size=plan.S.size, overlap_size=plan.O_next.size,
                elapsed_ns=time.perf_counter_ns() - t0))
            if snapshots is not None:
                snapshots.append(memory.snapshot())
            if w_history is not None:
                w_history.append(w_next.copy())

            accesses += cost
            last_epoch = epoch
            w = w_next
            plan = next_plan
            g_eval = g_next_eval if g_next_eval is not None else problem.evaluate(
                w, plan.S, chunk_count=config.chunk_count)
            k += 1

    return RunResult(records=records, diverged=diverged, w_final=w, pair_log=pair_log,
                     hessian_snapshots=snapshots, w_history=w_history, memory=memory)


def _attempt_update(memory, s, y, config, k, pair_log) -> bool:
    accepted = memory.try_update(s, y, epsilon=config.epsilon, cautious=config.cautious)
    ys = float(y @ s) if np.isfinite(y).all() and np.isfinite(s).all() else np.nan
    pair_log.append(PairEvent(k=k, accepted=accepted, ys=ys,
                              ss=float(s @ s), yy=float(y @ y) if np.isfinite(y).all() else np.nan))
    return accepted


def _run_serial_sgd(problem, config, snapshot_hessians, keep_w_history):
    _, init_seed, sgd_seed = np.random.SeedSequence(config.seed).spawn(3)
    rng = np.random.default_rng(sgd_seed)
    w = initial_point(problem, config.w0_mode, init_seed)
    n = problem.n

    records: list[IterationRecord] = []
    snapshots = [LbfgsMemory(0).snapshot()] if snapshot_hessians else None
    w_history = [w.copy()] if keep_w_history else None
    diverged = False
    k = 0
    last_epoch = -1

    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        while True:
            t0 = time.perf_counter_ns()
            idx = np.array([rng.integers(n)], dtype=np.int64)
            g_eval = problem.evaluate(w, idx)
            if not _finite(g_eval.value, g_eval.gradient):
                diverged = True
                break
            epoch = k // n
            stop = (config.epochs is not None and epoch >= config.epochs) or (
                config.max_iters is not None and k >= config.max_iters
            )
            full_due = (
                k == 0
                or stop
                or (config.eval_every is not None and k % config.eval_every == 0)
                or (config.eval_every is None and epoch > last_epoch)
            )
            F_full = grad_norm_full = None
            if full_due:
                full = problem.evaluate_full(w, chunk_count=config.chunk_count)
                F_full = full.value
                grad_norm_full = float(np.linalg.norm(full.gradient))

            records.append(IterationRecord(
                k=k, epoch=epoch, F_batch=g_eval.value,
                grad_norm_batch=float(np.linalg.norm(g_eval.gradient)),
                F_full=F_full, grad_norm_full=grad_norm_full, pair_skipped=None,
                batch_size=1, overlap_size=0, elapsed_ns=time.perf_counter_ns() - t0))
            if stop:
                break
            w = w - config.alpha * g_eval.gradient
            if w_history is not None:
                w_history.append(w.copy())
            last_epoch = epoch
            k += 1

    return RunResult(records=records, diverged=diverged, w_final=w,
                     hessian_snapshots=snapshots, w_history=w_history, memory=None)
