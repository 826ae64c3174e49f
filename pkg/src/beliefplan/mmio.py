"""Matrix Market coordinate-format interchange.

Writers emit 17 significant digits so float64 values round-trip exactly,
which keeps externally cross-checked determinants bit-comparable.
Symmetric matrices use the ``symmetric`` qualifier (entries stored in the
lower triangle, per the format convention); factors and constraint-row
blocks use ``general``.
"""

from __future__ import annotations

import numpy as np

from .sparse import SparseRowBlock, SparseSymmetric, UpperTriangular

_HEADER = "%%MatrixMarket matrix coordinate real {symmetry}"


def _format_entries(rows, cols, vals) -> list[str]:
    return [f"{int(i) + 1} {int(j) + 1} {v:.17g}" for i, j, v in zip(rows, cols, vals)]


def _parse(text: str, expect_symmetry: str):
    lines = text.splitlines()
    if not lines or not lines[0].startswith("%%MatrixMarket"):
        raise ValueError("missing MatrixMarket header")
    header = lines[0].split()
    if header[1:4] != ["matrix", "coordinate", "real"]:
        raise ValueError(f"unsupported MatrixMarket header: {lines[0]}")
    if header[4] != expect_symmetry:
        raise ValueError(f"expected {expect_symmetry} matrix, found {header[4]}")
    body = [ln for ln in lines[1:] if ln.strip() and not ln.lstrip().startswith("%")]
    n_rows, n_cols, nnz = (int(tok) for tok in body[0].split())
    entries = body[1:]
    if len(entries) != nnz:
        raise ValueError(f"declared {nnz} entries, found {len(entries)}")
    rows = np.empty(nnz, dtype=np.int64)
    cols = np.empty(nnz, dtype=np.int64)
    vals = np.empty(nnz, dtype=np.float64)
    for k, ln in enumerate(entries):
        i, j, v = ln.split()
        rows[k] = int(i) - 1
        cols[k] = int(j) - 1
        vals[k] = float(v)
    return n_rows, n_cols, rows, cols, vals


def symmetric_to_mm(m: SparseSymmetric) -> str:
    lines = [_HEADER.format(symmetry="symmetric"), f"{m.dim} {m.dim} {m.nnz}"]
    # stored upper triangle flips to the lower triangle the format expects
    lines += _format_entries(m.cols, m.rows, m.vals)
    return "\n".join(lines) + "\n"


def mm_to_symmetric(text: str) -> SparseSymmetric:
    n_rows, n_cols, rows, cols, vals = _parse(text, "symmetric")
    if n_rows != n_cols:
        raise ValueError("symmetric matrix must be square")
    lo = np.minimum(rows, cols)
    hi = np.maximum(rows, cols)
    return SparseSymmetric(n_rows, lo, hi, vals)


def triangular_to_mm(r: UpperTriangular) -> str:
    lines = [_HEADER.format(symmetry="general"), f"{r.dim} {r.dim} {r.nnz}"]
    for i in range(r.dim):
        lines += _format_entries([i], [i], [r.diag[i]])
        lines += _format_entries([i] * r.row_cols[i].size, r.row_cols[i], r.row_vals[i])
    return "\n".join(lines) + "\n"


def mm_to_triangular(text: str) -> UpperTriangular:
    n_rows, n_cols, rows, cols, vals = _parse(text, "general")
    if n_rows != n_cols:
        raise ValueError("triangular factor must be square")
    diag = np.zeros(n_rows)
    row_cols: list[list[int]] = [[] for _ in range(n_rows)]
    row_vals: list[list[float]] = [[] for _ in range(n_rows)]
    for i, j, v in zip(rows, cols, vals):
        if j < i:
            raise ValueError("factor entry below the diagonal")
        if i == j:
            diag[i] = v
        else:
            row_cols[i].append(int(j))
            row_vals[i].append(float(v))
    packed_c = []
    packed_v = []
    for rc, rv in zip(row_cols, row_vals):
        order = np.argsort(rc)
        packed_c.append(np.asarray(rc, dtype=np.int64)[order])
        packed_v.append(np.asarray(rv, dtype=np.float64)[order])
    return UpperTriangular(n_rows, diag, tuple(packed_c), tuple(packed_v))


def row_block_to_mm(u: SparseRowBlock) -> str:
    lines = [_HEADER.format(symmetry="general"), f"{u.n_rows} {u.n_cols} {u.nnz}"]
    for i in range(u.n_rows):
        lines += _format_entries([i] * u.row_cols[i].size, u.row_cols[i], u.row_vals[i])
    return "\n".join(lines) + "\n"


def mm_to_row_block(text: str) -> SparseRowBlock:
    n_rows, n_cols, rows, cols, vals = _parse(text, "general")
    row_cols: list[list[int]] = [[] for _ in range(n_rows)]
    row_vals: list[list[float]] = [[] for _ in range(n_rows)]
    for i, j, v in zip(rows, cols, vals):
        row_cols[i].append(int(j))
        row_vals[i].append(float(v))
    packed_c = []
    packed_v = []
    for rc, rv in zip(row_cols, row_vals):
        order = np.argsort(rc)
        packed_c.append(np.asarray(rc, dtype=np.int64)[order])
        packed_v.append(np.asarray(rv, dtype=np.float64)[order])
    return SparseRowBlock(n_rows, n_cols, tuple(packed_c), tuple(packed_v))
