"""Sparse symmetric and triangular matrix kernels.

Storage is deliberately simple and structural:

- symmetric matrices keep an upper-triangle coordinate list,
- triangular factors keep per-row sorted column/value arrays plus a dense
  diagonal vector.

"Structural" means the stored pattern is the symbolic support produced by
the operation (elimination fill, rotation unions), independent of values
that happen to cancel to zero.  Nonzero counts reported elsewhere in the
package are counts of stored entries, so they are exact and reproducible.

All types are immutable after construction and every operation returns a
new object; instances can be shared freely across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatch,
    NotPositiveDefinite,
    RankDeficientAugmentation,
    ShapeViolation,
)

# Pivots at or below this floor are treated as numerically singular.
# Failing loudly (rather than jittering the diagonal) keeps factors exact,
# which the zero-offset guarantee of uninvolved-variable sparsification
# depends on.
PIVOT_FLOOR = 1e-12

_EMPTY_I = np.empty(0, dtype=np.int64)
_EMPTY_F = np.empty(0, dtype=np.float64)


def _as_index_array(a) -> np.ndarray:
    out = np.asarray(a, dtype=np.int64)
    if out.ndim != 1:
        raise ValueError("expected a 1-d index array")
    return out


def _as_value_array(a) -> np.ndarray:
    out = np.asarray(a, dtype=np.float64)
    if out.ndim != 1:
        raise ValueError("expected a 1-d value array")
    if out.size and not np.all(np.isfinite(out)):
        raise ValueError("matrix values must be finite")
    return out


@dataclass(frozen=True)
class SparseSymmetric:
    """Symmetric matrix stored as its upper triangle in coordinate form.

    ``rows[k] <= cols[k] < dim`` for every stored entry and coordinates are
    unique and lexicographically sorted.  The dense form is symmetric by
    construction; only the stored (upper) entries count toward ``nnz``.
    """

    dim: int
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray

    def __post_init__(self):
        if self.dim <= 0:
            raise ValueError("dim must be positive")
        rows = _as_index_array(self.rows)
        cols = _as_index_array(self.cols)
        vals = _as_value_array(self.vals)
        if not (rows.size == cols.size == vals.size):
            raise ValueError("coordinate arrays must have equal length")
        if rows.size:
            if rows.min() < 0 or cols.max() >= self.dim:
                raise ValueError("coordinates out of range")
            if np.any(rows > cols):
                raise ValueError("entries must lie in the upper triangle (row <= col)")
        keys = rows * self.dim + cols
        order = np.argsort(keys, kind="stable")
        keys = keys[order]
        if keys.size > 1 and np.any(np.diff(keys) == 0):
            raise ValueError("duplicate coordinates")
        object.__setattr__(self, "rows", rows[order])
        object.__setattr__(self, "cols", cols[order])
        object.__setattr__(self, "vals", vals[order])

    @classmethod
    def from_entries(cls, dim: int, entries) -> "SparseSymmetric":
        """Build from an iterable of ``(row, col, value)`` upper-triangle entries."""
        if entries:
            rows, cols, vals = map(np.asarray, zip(*entries))
        else:
            rows, cols, vals = _EMPTY_I, _EMPTY_I, _EMPTY_F
        return cls(dim, rows, cols, vals)

    @classmethod
    def accumulate(cls, dim: int, rows, cols, vals) -> "SparseSymmetric":
        """Build from upper-triangle coordinates, summing duplicates.

        Used when assembling an information matrix from factor outer
        products, where many factors hit the same entry.
        """
        rows = _as_index_array(rows)
        cols = _as_index_array(cols)
        vals = _as_value_array(vals)
        keys = rows * dim + cols
        uniq, inverse = np.unique(keys, return_inverse=True)
        summed = np.zeros(uniq.size, dtype=np.float64)
        np.add.at(summed, inverse, vals)
        return cls(dim, uniq // dim, uniq % dim, summed)

    @classmethod
    def from_dense(cls, a, tol: float = 0.0) -> "SparseSymmetric":
        a = np.asarray(a, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("expected a square matrix")
        if not np.allclose(a, a.T, rtol=0.0, atol=max(tol, 1e-13 * max(1.0, np.abs(a).max(initial=0.0)))):
            raise ValueError("matrix is not symmetric")
        iu = np.triu_indices(a.shape[0])
        mask = np.abs(a[iu]) > tol
        return cls(a.shape[0], iu[0][mask], iu[1][mask], a[iu][mask])

    @classmethod
    def identity(cls, dim: int) -> "SparseSymmetric":
        idx = np.arange(dim, dtype=np.int64)
        return cls(dim, idx, idx, np.ones(dim))

    @classmethod
    def diagonal(cls, values) -> "SparseSymmetric":
        values = _as_value_array(values)
        idx = np.arange(values.size, dtype=np.int64)
        return cls(values.size, idx, idx, values)

    @property
    def nnz(self) -> int:
        """Number of stored upper-triangle entries."""
        return int(self.vals.size)

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.dim, self.dim))
        out[self.rows, self.cols] = self.vals
        out[self.cols, self.rows] = self.vals
        return out

    def diagonal_vector(self) -> np.ndarray:
        out = np.zeros(self.dim)
        on_diag = self.rows == self.cols
        out[self.rows[on_diag]] = self.vals[on_diag]
        return out

    def row_adjacency(self) -> tuple[list[np.ndarray], list[np.ndarray]]:
        """Per-row column/value arrays of the stored upper triangle."""
        cols_by_row: list[np.ndarray] = [_EMPTY_I] * self.dim
        vals_by_row: list[np.ndarray] = [_EMPTY_F] * self.dim
        if self.rows.size:
            boundaries = np.searchsorted(self.rows, np.arange(self.dim + 1))
            for i in range(self.dim):
                lo, hi = boundaries[i], boundaries[i + 1]
                if hi > lo:
                    cols_by_row[i] = self.cols[lo:hi]
                    vals_by_row[i] = self.vals[lo:hi]
        return cols_by_row, vals_by_row


@dataclass(frozen=True)
class UpperTriangular:
    """Upper-triangular factor with positive diagonal.

    The diagonal is dense; each row additionally stores its strictly-upper
    entries as sorted column/value arrays.  ``nnz`` counts the diagonal plus
    all stored off-diagonal entries.
    """

    dim: int
    diag: np.ndarray
    row_cols: tuple
    row_vals: tuple

    def __post_init__(self):
        if self.dim <= 0:
            raise ValueError("dim must be positive")
        diag = _as_value_array(self.diag)
        if diag.size != self.dim:
            raise ValueError("diagonal length must equal dim")
        if np.any(diag <= 0.0):
            raise ValueError("diagonal entries must be strictly positive")
        if len(self.row_cols) != self.dim or len(self.row_vals) != self.dim:
            raise ValueError("need one column/value array per row")
        row_cols = []
        row_vals = []
        for i in range(self.dim):
            cols = _as_index_array(self.row_cols[i])
            vals = _as_value_array(self.row_vals[i])
            if cols.size != vals.size:
                raise ValueError("row arrays must have equal length")
            if cols.size:
                if cols[0] <= i or cols[-1] >= self.dim:
                    raise ValueError("row entries must satisfy row < col < dim")
                if np.any(np.diff(cols) <= 0):
                    raise ValueError("row columns must be strictly increasing")
            row_cols.append(cols)
            row_vals.append(vals)
        object.__setattr__(self, "diag", diag)
        object.__setattr__(self, "row_cols", tuple(row_cols))
        object.__setattr__(self, "row_vals", tuple(row_vals))

    @classmethod
    def identity(cls, dim: int) -> "UpperTriangular":
        return cls(dim, np.ones(dim), (_EMPTY_I,) * dim, (_EMPTY_F,) * dim)

    @classmethod
    def from_diagonal(cls, values) -> "UpperTriangular":
        values = _as_value_array(values)
        n = values.size
        return cls(n, values, (_EMPTY_I,) * n, (_EMPTY_F,) * n)

    @classmethod
    def from_dense(cls, a, tol: float = 0.0) -> "UpperTriangular":
        a = np.asarray(a, dtype=np.float64)
        n = a.shape[0]
        if a.ndim != 2 or a.shape[1] != n:
            raise ValueError("expected a square matrix")
        if np.any(np.abs(np.tril(a, -1)) > 0):
            raise ValueError("matrix has entries below the diagonal")
        row_cols = []
        row_vals = []
        for i in range(n):
            tail = a[i, i + 1:]
            nz = np.nonzero(np.abs(tail) > tol)[0]
            row_cols.append(nz + i + 1)
            row_vals.append(tail[nz])
        return cls(n, a.diagonal().copy(), tuple(row_cols), tuple(row_vals))

    @property
    def nnz(self) -> int:
        return self.dim + sum(int(c.size) for c in self.row_cols)

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.dim, self.dim))
        out[np.arange(self.dim), np.arange(self.dim)] = self.diag
        for i in range(self.dim):
            out[i, self.row_cols[i]] = self.row_vals[i]
        return out

    def diagonal_only(self) -> "UpperTriangular":
        """Drop every off-diagonal entry, keeping the diagonal."""
        return UpperTriangular.from_diagonal(self.diag)

    def gram(self) -> SparseSymmetric:
        """Form the symmetric product (self)^T (self) structurally."""
        n = self.dim
        pair_cache: dict = {}

        def pairs(m: int):
            got = pair_cache.get(m)
            if got is None:
                got = np.triu_indices(m)
                pair_cache[m] = got
            return got

        chunks_k = []
        for k in range(n):
            support = np.concatenate(([k], self.row_cols[k]))
            ii, jj = pairs(support.size)
            chunks_k.append(support[ii] * n + support[jj])
        keys = np.concatenate(chunks_k)
        if n * n <= 1 << 24:
            # scatter by flat key: presence mask keeps structural zeros
            present = np.bincount(keys, minlength=n * n).astype(bool)
            dense_r = self.to_dense()
            flat = (dense_r.T @ dense_r).reshape(-1)
            idx = np.nonzero(present)[0]
            return SparseSymmetric(n, idx // n, idx % n, flat[idx])
        chunks_v = []
        for k in range(n):
            values = np.concatenate(([self.diag[k]], self.row_vals[k]))
            m = values.size
            ii, jj = np.triu_indices(m)
            chunks_v.append(values[ii] * values[jj])
        return SparseSymmetric.accumulate(
            n,
            keys // n,
            keys % n,
            np.concatenate(chunks_v),
        )

    def gram_diagonal(self) -> np.ndarray:
        """Diagonal of (self)^T (self) without forming the product."""
        out = self.diag ** 2
        for k in range(self.dim):
            np.add.at(out, self.row_cols[k], self.row_vals[k] ** 2)
        return out


@dataclass(frozen=True)
class Permutation:
    """Index permutation with its precomputed inverse.

    ``forward[i]`` is the source index that lands at position ``i`` of the
    permuted object, so applying the permutation reads
    ``out[i, j] = m[forward[i], forward[j]]``.
    """

    forward: np.ndarray
    inverse: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self):
        forward = _as_index_array(self.forward)
        n = forward.size
        inverse = np.empty(n, dtype=np.int64)
        counts = np.zeros(n, dtype=np.int64)
        if n == 0:
            raise ValueError("permutation must be non-empty")
        if forward.min() < 0 or forward.max() >= n:
            raise ValueError("permutation indices out of range")
        np.add.at(counts, forward, 1)
        if np.any(counts != 1):
            raise ValueError("permutation indices must be distinct")
        inverse[forward] = np.arange(n, dtype=np.int64)
        object.__setattr__(self, "forward", forward)
        object.__setattr__(self, "inverse", inverse)

    @classmethod
    def identity(cls, dim: int) -> "Permutation":
        return cls(np.arange(dim, dtype=np.int64))

    @classmethod
    def move_to_front(cls, dim: int, first: list[int]) -> "Permutation":
        """Stable permutation placing ``first`` (in their original relative
        order) ahead of all remaining indices (also order-preserving)."""
        first_arr = _as_index_array(np.sort(np.asarray(list(first), dtype=np.int64)))
        mask = np.zeros(dim, dtype=bool)
        mask[first_arr] = True
        rest = np.nonzero(~mask)[0]
        return cls(np.concatenate([first_arr, rest]))

    @property
    def dim(self) -> int:
        return int(self.forward.size)

    def inverted(self) -> "Permutation":
        return Permutation(self.inverse.copy())

    def is_identity(self) -> bool:
        return bool(np.all(self.forward == np.arange(self.dim)))


@dataclass(frozen=True)
class SparseRowBlock:
    """Stack of sparse constraint rows over ``n_cols`` variables.

    Rows with zero stored entries are permitted (vacuous constraints).
    """

    n_rows: int
    n_cols: int
    row_cols: tuple
    row_vals: tuple

    def __post_init__(self):
        if self.n_cols <= 0:
            raise ValueError("n_cols must be positive")
        if self.n_rows < 0:
            raise ValueError("n_rows must be non-negative")
        if len(self.row_cols) != self.n_rows or len(self.row_vals) != self.n_rows:
            raise ValueError("need one column/value array per row")
        row_cols = []
        row_vals = []
        for cols, vals in zip(self.row_cols, self.row_vals):
            cols = _as_index_array(cols)
            vals = _as_value_array(vals)
            if cols.size != vals.size:
                raise ValueError("row arrays must have equal length")
            if cols.size:
                if cols[0] < 0 or cols[-1] >= self.n_cols:
                    raise ValueError("row entry column out of range")
                if np.any(np.diff(cols) <= 0):
                    raise ValueError("row columns must be strictly increasing")
            row_cols.append(cols)
            row_vals.append(vals)
        object.__setattr__(self, "row_cols", tuple(row_cols))
        object.__setattr__(self, "row_vals", tuple(row_vals))

    @classmethod
    def from_dense(cls, a, n_cols: int | None = None, tol: float = 0.0) -> "SparseRowBlock":
        a = np.atleast_2d(np.asarray(a, dtype=np.float64))
        n_cols = a.shape[1] if n_cols is None else n_cols
        row_cols = []
        row_vals = []
        for r in a:
            nz = np.nonzero(np.abs(r) > tol)[0]
            row_cols.append(nz)
            row_vals.append(r[nz])
        return cls(a.shape[0], n_cols, tuple(row_cols), tuple(row_vals))

    @classmethod
    def empty(cls, n_cols: int) -> "SparseRowBlock":
        return cls(0, n_cols, (), ())

    @property
    def nnz(self) -> int:
        return sum(int(c.size) for c in self.row_cols)

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n_rows, self.n_cols))
        for i in range(self.n_rows):
            out[i, self.row_cols[i]] = self.row_vals[i]
        return out

    def column_support(self) -> np.ndarray:
        """Sorted array of columns that carry at least one stored entry."""
        if not self.row_cols:
            return _EMPTY_I
        return np.unique(np.concatenate(self.row_cols))

    def gram_dense(self) -> np.ndarray:
        dense = self.to_dense()
        return dense.T @ dense


# ---------------------------------------------------------------------------
# Factorization and updates
# ---------------------------------------------------------------------------


def _symbolic_fill(m: SparseSymmetric) -> list:
    """Strictly-upper fill pattern of the factor, per row, via the
    elimination tree: build the tree with ancestor compression, then
    enumerate each row's reach by climbing plain parent pointers.

    The pattern depends only on the stored coordinates (stored zeros are
    structural), and each row's columns come out already sorted.
    """
    n = m.dim
    # column adjacency of the upper triangle: for node i, the rows j < i
    order = np.argsort(m.cols, kind="stable")
    cols_sorted = m.cols[order]
    rows_sorted = m.rows[order]
    boundaries = np.searchsorted(cols_sorted, np.arange(n + 1))
    col_adj = [
        rows_sorted[boundaries[i]: boundaries[i + 1]].tolist() for i in range(n)
    ]

    parent = np.full(n, -1, dtype=np.int64)
    ancestor = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        for j in col_adj[i]:
            k = j
            while k != -1 and k < i:
                nxt = ancestor[k]
                ancestor[k] = i
                if nxt == -1:
                    parent[k] = i
                k = nxt

    rows_fill: list[list[int]] = [[] for _ in range(n)]
    mark = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        mark[i] = i
        for j in col_adj[i]:
            k = j
            while k != -1 and k < i and mark[k] != i:
                rows_fill[k].append(i)
                mark[k] = i
                k = parent[k]
    return rows_fill


def cholesky(m: SparseSymmetric) -> UpperTriangular:
    """Sparse-structural Cholesky: upper-triangular R with R^T R = m.

    The stored pattern is the exact symbolic fill of the given ordering
    (no reordering is attempted); the numeric work runs on the dense
    matrix, whose factor agrees with sparse elimination entrywise and is
    exactly zero outside the fill.  Raises NotPositiveDefinite on any
    pivot at or below the pivot floor; the input is never jittered.
    """
    n = m.dim
    dense = m.to_dense()
    try:
        lower = np.linalg.cholesky(dense)
    except np.linalg.LinAlgError as e:
        raise NotPositiveDefinite(str(e)) from e
    diag_out = lower.diagonal().copy()
    bad = np.nonzero(diag_out * diag_out <= PIVOT_FLOOR)[0]
    if bad.size:
        i = int(bad[0])
        raise NotPositiveDefinite(
            f"pivot {diag_out[i] ** 2:.3e} at index {i} is at or below {PIVOT_FLOOR:.0e}"
        )

    rows_fill = _symbolic_fill(m)
    rows_cols: list[np.ndarray] = [_EMPTY_I] * n
    rows_vals: list[np.ndarray] = [_EMPTY_F] * n
    for i, fill in enumerate(rows_fill):
        if fill:
            cols = np.asarray(fill, dtype=np.int64)
            rows_cols[i] = cols
            rows_vals[i] = lower[cols, i].copy()
    return UpperTriangular(n, diag_out, tuple(rows_cols), tuple(rows_vals))


def permute_symmetric(m: SparseSymmetric, p: Permutation) -> SparseSymmetric:
    """Symmetric reordering: out[i, j] = m[p(i), p(j)].  nnz is unchanged."""
    if p.dim != m.dim:
        raise DimensionMismatch(f"permutation dim {p.dim} != matrix dim {m.dim}")
    new_r = p.inverse[m.rows]
    new_c = p.inverse[m.cols]
    lo = np.minimum(new_r, new_c)
    hi = np.maximum(new_r, new_c)
    return SparseSymmetric(m.dim, lo, hi, m.vals.copy())


def permute_triangular_back(
    r: UpperTriangular, p: Permutation, sparsified: set[int] | frozenset[int]
) -> UpperTriangular:
    """Reorder a factor whose ``sparsified`` rows are diagonal-only.

    Because those rows carry no off-diagonal entries, applying the
    permutation directly to the factor keeps it upper triangular; the
    result squares to the correspondingly permuted symmetric product.
    Raises ShapeViolation if any stored entry would land below the
    diagonal, which indicates the named rows were not actually sparsified
    (or the permutation does not match the sparsified-first ordering).
    """
    if p.dim != r.dim:
        raise DimensionMismatch(f"permutation dim {p.dim} != factor dim {r.dim}")
    for i in sparsified:
        if r.row_cols[i].size:
            raise ShapeViolation(f"row {i} was named as sparsified but still has off-diagonal entries")
    n = r.dim
    inv = p.inverse
    new_diag = np.empty(n)
    new_diag[inv] = r.diag

    rows_cols: list[np.ndarray] = [_EMPTY_I] * n
    rows_vals: list[np.ndarray] = [_EMPTY_F] * n
    for i in range(n):
        cols = r.row_cols[i]
        if not cols.size:
            continue
        ni = inv[i]
        ncols = inv[cols]
        if np.any(ncols < ni):
            raise ShapeViolation(
                f"entry of row {i} would land below the diagonal after permutation; "
                "rows selected for sparsification still carry off-diagonal entries"
            )
        order = np.argsort(ncols, kind="stable")
        rows_cols[ni] = ncols[order]
        rows_vals[ni] = r.row_vals[i][order]

    return UpperTriangular(n, new_diag, tuple(rows_cols), tuple(rows_vals))


def _rotate_sparse_rows(
    tc: np.ndarray, tv: np.ndarray, uc: np.ndarray, uv: np.ndarray, c: float, s: float
):
    """Givens-rotate two sparse row tails; returns (union, new_row, new_upd)."""
    union = np.union1d(tc, uc)
    a = np.zeros(union.size)
    b = np.zeros(union.size)
    if tc.size:
        a[np.searchsorted(union, tc)] = tv
    if uc.size:
        b[np.searchsorted(union, uc)] = uv
    return union, c * a + s * b, c * b - s * a


def lowrank_update(r: UpperTriangular, u: SparseRowBlock, n_new: int = 0) -> UpperTriangular:
    """Rank-k information update of a triangular factor by Givens rotations.

    Returns upper-triangular R+ of dimension ``r.dim + n_new`` satisfying
    (R+)^T (R+) = [R | 0]^T [R | 0] + u^T u.  Each constraint row is folded
    in by rotating it against the factor row at its leading column, so only
    rows reachable from the row's sparsity pattern are touched; all other
    rows are shared with the input factor.

    Raises RankDeficientAugmentation if any of the ``n_new`` appended
    variables ends up without diagonal support (singular posterior).
    """
    if n_new < 0:
        raise ValueError("n_new must be non-negative")
    nd = r.dim + n_new
    if u.n_cols != nd:
        raise DimensionMismatch(f"update has {u.n_cols} columns, expected {nd}")

    diag = np.zeros(nd)
    diag[: r.dim] = r.diag
    rows_cols = list(r.row_cols) + [_EMPTY_I] * n_new
    rows_vals = list(r.row_vals) + [_EMPTY_F] * n_new

    for cur_c, cur_v in zip(u.row_cols, u.row_vals):
        while cur_c.size:
            x = cur_v[0]
            if x == 0.0:
                # structurally stored zero eliminates trivially
                cur_c = cur_c[1:]
                cur_v = cur_v[1:]
                continue
            j = int(cur_c[0])
            d = diag[j]
            if d == 0.0:
                # previously untouched appended row: the rotation reduces to
                # moving the (sign-normalized) constraint row into place
                sign = 1.0 if x > 0 else -1.0
                diag[j] = abs(x)
                rows_cols[j] = cur_c[1:].copy()
                rows_vals[j] = sign * cur_v[1:]
                break
            hyp = math.hypot(d, x)
            c = d / hyp
            s = x / hyp
            union, new_row, new_upd = _rotate_sparse_rows(
                rows_cols[j], rows_vals[j], cur_c[1:], cur_v[1:], c, s
            )
            diag[j] = hyp
            rows_cols[j] = union
            rows_vals[j] = new_row
            cur_c = union
            cur_v = new_upd

    if n_new and np.any(diag[r.dim:] == 0.0):
        missing = int(np.nonzero(diag[r.dim:] == 0.0)[0][0]) + r.dim
        raise RankDeficientAugmentation(f"appended variable {missing} has no supporting row")
    return UpperTriangular(nd, diag, tuple(rows_cols), tuple(rows_vals))


def logdet_triangular(r: UpperTriangular) -> float:
    """log |R^T R| = 2 * sum(log diag(R)); linear in the dimension."""
    return float(2.0 * np.sum(np.log(r.diag)))


def dense_logdet_oracle(m: SparseSymmetric) -> float:
    """Dense-factorization log-determinant, for tests and cross-checks only."""
    dense = m.to_dense()
    try:
        chol = np.linalg.cholesky(dense)
    except np.linalg.LinAlgError as e:
        raise NotPositiveDefinite(str(e)) from e
    return float(2.0 * np.sum(np.log(chol.diagonal())))
