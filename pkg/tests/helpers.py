"""Shared generators and independent oracles for the test suite.

Oracles deliberately avoid the package's sparse kernels: dense numpy
factorizations for values, and plain set arithmetic for symbolic sparsity
patterns.
"""

import numpy as np

from beliefplan.sparse import SparseRowBlock, SparseSymmetric, UpperTriangular


def random_sparse_spd(rng, dim, density=0.3, shift=1.0):
    """Random sparse SPD matrix built as A^T A + d I."""
    a = rng.normal(size=(dim, dim)) * (rng.random((dim, dim)) < density)
    return a.T @ a + np.eye(dim) * (shift + rng.random())


def random_spd_sparse_symmetric(rng, dim, density=0.3):
    return SparseSymmetric.from_dense(random_sparse_spd(rng, dim, density))


def random_update(rng, dim, n_new, extra_rows, density=0.5):
    """Random update rows guaranteed to support each appended variable
    (one dedicated triangular row per new variable)."""
    rows = n_new + extra_rows
    u = rng.normal(size=(rows, dim + n_new)) * (rng.random((rows, dim + n_new)) < density)
    for k in range(n_new):
        u[k, dim + k] = rng.normal() + 2.0
        u[k, dim + k + 1:] = 0.0
    return SparseRowBlock.from_dense(u, n_cols=dim + n_new)


def dense_logdet(m):
    sign, val = np.linalg.slogdet(np.asarray(m, dtype=float))
    assert sign > 0, "oracle needs a positive-definite matrix"
    return float(val)


def upper_pattern(r: UpperTriangular):
    """Set of (row, col) stored coordinates, diagonal included."""
    coords = {(i, i) for i in range(r.dim)}
    for i in range(r.dim):
        coords.update((i, int(j)) for j in r.row_cols[i])
    return coords


def symmetric_pattern(m: SparseSymmetric):
    return set(zip(m.rows.tolist(), m.cols.tolist()))


def pair_row(dim, i, j, a, b):
    """Rank-1 constraint row a*e_i + b*e_j over ``dim`` variables."""
    row = np.zeros(dim)
    row[i] = a
    row[j] = b
    return row


def build_toy_full_slam(rng=None):
    """Six-variable full-SLAM toy: three poses, three landmarks, and two
    candidate paths that each add two poses and observe one landmark.

    Returns (belief, candidates, names) with scalar blocks ordered
    [x1, x2, x3, l1, l2, l3].  The left path observes l1, the right path
    observes l3; x1, x2 and l2 stay uninvolved in both.
    """
    import numpy as np

    from beliefplan.belief import CandidateAction, GaussianBelief, VariableLayout
    from beliefplan.sparse import SparseRowBlock, SparseSymmetric, cholesky

    rng = np.random.default_rng(77) if rng is None else rng
    names = ("x1", "x2", "x3", "l1", "l2", "l3")
    n = 6

    def val():
        return 0.6 + rng.random()

    rows = [pair_row(n, 0, 0, 1.2, 0.0)]  # anchor on x1
    for i, j in [(0, 1), (1, 2), (0, 3), (0, 4), (1, 4), (2, 5)]:
        rows.append(pair_row(n, i, j, val(), -val()))
    prior_rows = np.vstack(rows)
    info = SparseSymmetric.from_dense(prior_rows.T @ prior_rows)
    layout = VariableLayout.from_sizes([1] * n)
    belief = GaussianBelief(np.zeros(n), cholesky(info), layout)

    def path(action_id, observed_landmark):
        u = np.zeros((3, n + 2))
        u[0] = np.concatenate([pair_row(n, 2, 2, -val(), 0.0), [val(), 0.0]])  # x3 -> new pose 1
        u[0][2] = -val()
        u[1, n] = -val()
        u[1, n + 1] = val()  # new pose 1 -> new pose 2
        u[2][observed_landmark] = val()
        u[2][n] = -val()  # observe the landmark from new pose 1
        return CandidateAction(
            action_id,
            SparseRowBlock.from_dense(u, n_cols=n + 2),
            n_new_vars=2,
            predicted_new_means=np.array([0.5, 1.0]),
            new_blocks=(("generic", 1), ("generic", 1)),
        )

    candidates = (path(0, 3), path(1, 5))  # left observes l1, right observes l3
    return belief, candidates, names


def single_row_problem(rng, n, n_inv, sparsify_involved=0.5):
    """Random rank-1 decision problem in the sign-coherent regime: scalar
    nonnegative measurement rows over a small shared involved set, with the
    uninvolved blocks (plus a random slice of involved ones) sparsified."""
    from beliefplan.belief import CandidateAction, GaussianBelief, VariableLayout
    from beliefplan.sparse import SparseRowBlock, SparseSymmetric, cholesky
    from beliefplan.sparsify import SparsificationSpec, detect_involvement, sparsify_belief

    lam = random_sparse_spd(rng, n, density=0.6)
    root = cholesky(SparseSymmetric.from_dense(lam))
    b = GaussianBelief(np.zeros(n), root, VariableLayout.from_sizes([1] * n))
    inv_vars = sorted(rng.choice(n, size=n_inv, replace=False).tolist())
    candidates = []
    for cid in range(int(rng.integers(2, 5))):
        row = np.zeros(n)
        for v in inv_vars:
            if rng.random() < 0.8:
                row[v] = 0.2 + rng.random()
        if not row.any():
            row[inv_vars[0]] = 0.5
        candidates.append(CandidateAction(cid, SparseRowBlock.from_dense(row[None, :], n_cols=n)))
    mask = detect_involvement(b.layout, candidates)
    involved = sorted(mask.involved_blocks)
    extra = [v for v in involved if rng.random() < sparsify_involved]
    s_blocks = sorted(set(range(n)) - set(involved)) + extra
    b_s = sparsify_belief(b, SparsificationSpec.custom(s_blocks), mask)
    return b, b_s, mask, candidates


def symbolic_cholesky_pattern(adjacency, dim):
    """Fill pattern of elimination in the given order, by set arithmetic.

    ``adjacency`` holds the strictly-upper neighbor sets of the symmetric
    pattern; returns the per-row column sets of the factor (diagonal
    excluded).
    """
    reach = [set(adjacency[i]) for i in range(dim)]
    for i in range(dim):
        for j in reach[i]:
            reach[j].update(k for k in reach[i] if k > j)
    return reach
