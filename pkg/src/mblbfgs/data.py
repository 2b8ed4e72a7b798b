"""Sparse LIBSVM-format parsing and synthetic classification data."""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

_TOKEN = re.compile(r"\S+")


class ParseError(ValueError):
    """Raised for malformed LIBSVM input; carries 1-based line and column."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


@dataclass
class Dataset:
    """Sparse classification dataset with labels in {-1, +1}.

    Rows store 0-based feature indices sorted strictly increasing. Instances
    are immutable by convention after construction and safe to share across
    threads for reading.
    """

    n: int
    d: int
    rows: list[tuple[np.ndarray, np.ndarray]]
    labels: np.ndarray
    _csr: sparse.csr_matrix | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if len(self.rows) != self.n or len(self.labels) != self.n:
            raise ValueError("rows/labels length must equal n")
        if self.n and not np.all((self.labels == 1.0) | (self.labels == -1.0)):
            raise ValueError("labels must be -1 or +1")
        for idx, _ in self.rows:
            if idx.size and (idx[0] < 0 or idx[-1] >= self.d):
                raise ValueError("feature index out of range")
            if idx.size > 1 and not np.all(np.diff(idx) > 0):
                raise ValueError("row indices must be strictly increasing")

    def matrix(self) -> sparse.csr_matrix:
        """n x d CSR view of the rows (built once, then cached)."""
        if self._csr is None:
            indptr = np.zeros(self.n + 1, dtype=np.int64)
            for i, (idx, _) in enumerate(self.rows):
                indptr[i + 1] = indptr[i] + idx.size
            indices = np.concatenate([idx for idx, _ in self.rows]) if self.n else np.empty(0, dtype=np.int64)
            values = np.concatenate([val for _, val in self.rows]) if self.n else np.empty(0)
            self._csr = sparse.csr_matrix((values, indices, indptr), shape=(self.n, self.d))
        return self._csr

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.n == other.n
            and self.d == other.d
            and np.array_equal(self.labels, other.labels)
            and all(
                np.array_equal(ia, ib) and np.array_equal(va, vb)
                for (ia, va), (ib, vb) in zip(self.rows, other.rows)
            )
        )


@dataclass
class SyntheticSpec:
    """Generator knobs for planted-hyperplane sparse data."""

    n: int
    d: int
    nnz_per_row: int
    seed: int
    flip_noise: float = 0.0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if not 1 <= self.nnz_per_row <= self.d:
            raise ValueError("nnz_per_row must satisfy 1 <= nnz <= d")
        if not 0.0 <= self.flip_noise < 1.0:
            raise ValueError("flip_noise must lie in [0, 1)")


def _parse_label(token: str, zero_one: bool) -> float:
    value = float(token)
    if zero_one:
        if value == 0.0:
            return -1.0
        if value == 1.0:
            return 1.0
        raise ValueError(f"label {token!r} not in {{0, 1}}")
    if value == 1.0 or value == -1.0:
        return value
    raise ValueError(f"label {token!r} not in {{-1, +1}}")


def parse_libsvm(source, dim: int | None = None, zero_one_labels: bool = False) -> Dataset:
    """Parse LIBSVM text into a Dataset.

    `source` is a string or an iterable of lines. Each line is
    `<label> <idx>:<val> ...` with 1-based indices; anything after `#` is
    ignored. `dim` raises the inferred dimension (never lowers it), so train
    and test files can agree. With `zero_one_labels`, labels 0/1 map to -1/+1.
    """
    if isinstance(source, str):
        source = source.splitlines()

    rows: list[tuple[np.ndarray, np.ndarray]] = []
    labels: list[float] = []
    max_index = -1

    for line_no, raw in enumerate(source, start=1):
        text = raw.split("#", 1)[0]
        tokens = list(_TOKEN.finditer(text))
        if not tokens:
            continue

        label_tok = tokens[0]
        try:
            label = _parse_label(label_tok.group(), zero_one_labels)
        except ValueError as exc:
            raise ParseError(str(exc), line_no, label_tok.start() + 1) from None

        idx_list: list[int] = []
        val_list: list[float] = []
        prev = 0
        for tok in tokens[1:]:
            col = tok.start() + 1
            piece = tok.group()
            idx_s, sep, val_s = piece.partition(":")
            if not sep:
                raise ParseError(f"expected idx:value, got {piece!r}", line_no, col)
            try:
                idx = int(idx_s)
            except ValueError:
                raise ParseError(f"bad feature index {idx_s!r}", line_no, col) from None
            if idx < 1:
                raise ParseError(f"feature index {idx} must be >= 1", line_no, col)
            if idx <= prev:
                raise ParseError(f"feature index {idx} not strictly increasing", line_no, col)
            try:
                val = float(val_s)
            except ValueError:
                raise ParseError(f"bad feature value {val_s!r}", line_no, col) from None
            prev = idx
            idx_list.append(idx - 1)
            val_list.append(val)

        if idx_list:
            max_index = max(max_index, idx_list[-1])
        rows.append((np.asarray(idx_list, dtype=np.int64), np.asarray(val_list)))
        labels.append(label)

    d = max_index + 1
    if dim is not None:
        d = max(d, dim)
    return Dataset(n=len(rows), d=d, rows=rows, labels=np.asarray(labels))


def to_libsvm_text(dataset: Dataset) -> str:
    """Serialize a Dataset back to LIBSVM text (1-based indices).

    Float values use repr, which round-trips exactly, so
    parse_libsvm(to_libsvm_text(ds)) == ds.
    """
    lines = []
    for (idx, val), label in zip(dataset.rows, dataset.labels):
        parts = ["+1" if label > 0 else "-1"]
        parts.extend(f"{i + 1}:{v!r}" for i, v in zip(idx.tolist(), val.tolist()))
        lines.append(" ".join(parts))
    return "\n".join(lines) + ("\n" if lines else "")


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    """Deterministically generate sparse data with planted-hyperplane labels.

    Each row gets exactly `nnz_per_row` distinct uniformly chosen indices with
    standard-normal values; the label is the sign of the row's score against a
    planted normal vector, flipped with probability `flip_noise`.
    """
    rng = np.random.default_rng(spec.seed)
    hyperplane = rng.standard_normal(spec.d)

    rows: list[tuple[np.ndarray, np.ndarray]] = []
    labels = np.empty(spec.n)
    for i in range(spec.n):
        idx = np.sort(rng.choice(spec.d, size=spec.nnz_per_row, replace=False))
        val = rng.standard_normal(spec.nnz_per_row)
        score = float(val @ hyperplane[idx])
        label = 1.0 if score >= 0 else -1.0
        if spec.flip_noise > 0 and rng.random() < spec.flip_noise:
            label = -label
        rows.append((idx.astype(np.int64), val))
        labels[i] = label
    return Dataset(n=spec.n, d=spec.d, rows=rows, labels=labels)
