"""Pre- and post-solution quality-of-solution bounds.

Three bound families over the posterior-entropy objective:

- topological: for pose-only factor graphs with a shared diagonal relative
  pose noise model, the information log-determinant tracks the spanning
  tree count of the (anchored) pose graph.  The lower bound is
  ``3 ln t(G) + mu``; the upper bound adds a Hadamard-style correction
  ``sum ln(d_i + psi) - ln|reduced Laplacian|``.  ``mu`` and ``psi`` are
  noise-model constants supplied by the caller (the synthetic scenario
  derives them from its own factor model, see ``scenario``);
- determinant: a Minkowski lower bound and a Hadamard upper bound on the
  posterior log-determinant; assumption-free, useful when the information
  matrix is diagonally dominant;
- rank-1 offset: when every candidate carries a single constraint row, a
  pre-solution bound on the balanced simplification offset from the
  involved-restricted entry sum of the covariance discrepancy.

Assembling a loss bound from per-candidate objective bounds plus the
simplified problem's selection is ``post_solution_loss_bound``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .belief import LN_2PI_E, CandidateAction, GaussianBelief
from .errors import (
    AlphaTooSmall,
    DisconnectedGraph,
    InconsistentBounds,
    IndexOutOfRange,
    LengthMismatch,
    NotRankOne,
    RankDeficientAugmentation,
)
from .sparse import logdet_triangular
from .sparsify import InvolvementMask


@dataclass(frozen=True)
class PoseGraph:
    """Undirected graph over pose nodes (no self-loops; parallel edges sum
    into the Laplacian).  Node 0 is the grounded node removed when forming
    the reduced Laplacian."""

    n_nodes: int
    edges: tuple

    def __post_init__(self):
        if self.n_nodes <= 0:
            raise ValueError("graph needs at least one node")
        normalized = []
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j:
                raise ValueError(f"self-loop at node {i}")
            if not (0 <= i < self.n_nodes and 0 <= j < self.n_nodes):
                raise ValueError(f"edge ({i}, {j}) out of range")
            normalized.append((min(i, j), max(i, j)))
        object.__setattr__(self, "edges", tuple(normalized))

    def laplacian(self) -> np.ndarray:
        lap = np.zeros((self.n_nodes, self.n_nodes))
        for i, j in self.edges:
            lap[i, i] += 1.0
            lap[j, j] += 1.0
            lap[i, j] -= 1.0
            lap[j, i] -= 1.0
        return lap

    def reduced_laplacian(self) -> np.ndarray:
        return self.laplacian()[1:, 1:]

    def reduced_degrees(self) -> np.ndarray:
        """Degrees of the non-grounded nodes (the reduced Laplacian diagonal)."""
        return self.laplacian().diagonal()[1:].copy()

    def is_connected(self) -> bool:
        seen = np.zeros(self.n_nodes, dtype=bool)
        adj: list[list[int]] = [[] for _ in range(self.n_nodes)]
        for i, j in self.edges:
            adj[i].append(j)
            adj[j].append(i)
        stack = [0]
        seen[0] = True
        while stack:
            node = stack.pop()
            for nxt in adj[node]:
                if not seen[nxt]:
                    seen[nxt] = True
                    stack.append(nxt)
        return bool(seen.all())


@dataclass(frozen=True)
class TopologicalNoiseConfig:
    """Constants of the topological bounds.

    ``ratio`` is the angular-to-position variance ratio of the assumed
    relative-pose noise; ``psi`` is the degree offset it induces and ``mu``
    the additive normalization.  Defaults are the neutral placeholders
    (mu=0, psi=1); validity against an actual objective requires constants
    derived from the actual noise model, e.g. via
    ``scenario.topological_constants``.
    """

    mu: float = 0.0
    psi: float = 1.0
    ratio: float = 0.25

    def __post_init__(self):
        if self.psi < 0:
            raise ValueError("psi must be non-negative")
        if self.ratio <= 0:
            raise ValueError("ratio must be positive")


def spanning_tree_count(g: PoseGraph) -> float:
    """ln of the spanning tree count, via the reduced-Laplacian determinant."""
    if not g.is_connected():
        raise DisconnectedGraph("spanning tree count needs a connected graph")
    sign, logdet = np.linalg.slogdet(g.reduced_laplacian())
    if g.n_nodes > 1 and sign <= 0:
        raise DisconnectedGraph("reduced Laplacian is numerically singular")
    return float(logdet)


def topological_bounds(g: PoseGraph, cfg: TopologicalNoiseConfig) -> tuple[float, float]:
    """(lb, ub) with lb = 3 ln t(g) + mu and
    ub = lb + sum_i ln(d_i + psi) - ln|reduced Laplacian|.

    The Hadamard inequality on the reduced Laplacian guarantees ub >= lb
    for any psi >= 0; this is asserted at runtime.
    """
    log_t = spanning_tree_count(g)
    lb = 3.0 * log_t + cfg.mu
    degrees = g.reduced_degrees()
    width = float(np.sum(np.log(degrees + cfg.psi)) - log_t) if degrees.size else 0.0
    ub = lb + width
    if ub < lb - 1e-9:
        raise AssertionError("topological upper bound fell below the lower bound")
    return lb, ub


def determinant_bounds(b: GaussianBelief, a: CandidateAction) -> tuple[float, float]:
    """Assumption-free objective bounds from determinant inequalities.

    Upper: Hadamard on the posterior information matrix (product of its
    diagonal dominates the determinant).  Lower: the prior determinant
    times the appended-variable Gram determinant; when the update could be
    full rank, the full superadditivity form is also taken.  Both are exact
    for diagonal matrices with an empty update.
    """
    if a.jacobian.n_cols != b.dim + a.n_new_vars:
        raise LengthMismatch(
            f"candidate {a.action_id} spans {a.jacobian.n_cols} columns, expected {b.dim + a.n_new_vars}"
        )
    n_post = b.dim + a.n_new_vars
    u = a.jacobian

    post_diag = np.zeros(n_post)
    post_diag[: b.dim] = b.root.gram_diagonal()
    for cols, vals in zip(u.row_cols, u.row_vals):
        post_diag[cols] += vals ** 2
    if np.any(post_diag <= 0.0):
        raise RankDeficientAugmentation("posterior diagonal has a non-positive entry")
    ub = 0.5 * (float(np.sum(np.log(post_diag))) - n_post * LN_2PI_E)

    logdet_prior = logdet_triangular(b.root)
    core = logdet_prior
    if a.n_new_vars:
        dense = u.to_dense()[:, b.dim:]
        sign, logdet_new = np.linalg.slogdet(dense.T @ dense)
        if sign <= 0:
            raise RankDeficientAugmentation("appended variables are not jointly supported")
        core = logdet_prior + float(logdet_new)
    if u.n_rows >= n_post:
        # the update may be full rank: superadditivity of det^(1/N)
        dense_full = u.to_dense()
        sign, logdet_uu = np.linalg.slogdet(dense_full.T @ dense_full)
        if sign > 0:
            prior_term = math.exp(logdet_prior / n_post) if a.n_new_vars == 0 else 0.0
            alt = n_post * math.log(prior_term + math.exp(float(logdet_uu) / n_post))
            core = max(core, alt)
    lb = 0.5 * (core - n_post * LN_2PI_E)
    return lb, ub


def _inverse_block(b: GaussianBelief, scalar_idx: np.ndarray) -> np.ndarray:
    """Rows/columns ``scalar_idx`` of the covariance, via triangular solves
    against the root factor (no explicit inverse)."""
    dense_r = b.root.to_dense()
    rhs = np.zeros((b.dim, scalar_idx.size))
    rhs[scalar_idx, np.arange(scalar_idx.size)] = 1.0
    half = solve_triangular(dense_r.T, rhs, lower=True)
    full = solve_triangular(dense_r, half, lower=False)
    return full[scalar_idx, :]


def rank1_offset_bound(
    b: GaussianBelief,
    b_s: GaussianBelief,
    mask: InvolvementMask,
    alpha: float,
    candidates=None,
) -> float:
    """Pre-solution offset bound for single-row ("rank-1") updates:
    |ln(1 + alpha * sum over involved pairs of (cov - cov_sparsified))|.

    ``alpha`` must dominate the squared Jacobian entries of every
    candidate; pass ``candidates`` to have the single-row and alpha
    preconditions checked.  Returns +inf when the log argument is
    non-positive (the bound degenerates conservatively).
    """
    if b.dim != b_s.dim:
        raise LengthMismatch("beliefs differ in dimension")
    if alpha < 0:
        raise AlphaTooSmall("alpha must be non-negative")
    if candidates is not None:
        for a in candidates:
            if a.jacobian.n_rows != 1:
                raise NotRankOne(f"candidate {a.action_id} has {a.jacobian.n_rows} rows")
            peak = max((float(np.max(v ** 2)) for v in a.jacobian.row_vals if v.size), default=0.0)
            if peak > alpha:
                raise AlphaTooSmall(f"alpha {alpha} < max squared entry {peak}")

    involved = sorted(mask.involved_blocks)
    scalar_idx = b.layout.scalar_indices(involved)
    if scalar_idx.size == 0:
        return 0.0
    diff = _inverse_block(b, scalar_idx) - _inverse_block(b_s, scalar_idx)
    arg = 1.0 + alpha * float(diff.sum())
    if arg <= 0.0:
        return math.inf
    return abs(math.log(arg))


_MONOTONICITY = ("none", "overestimates", "underestimates")


def post_solution_loss_bound(
    values_simp,
    simplified_best: int,
    ub_per_candidate,
    lb_simplified_best: float,
    monotonicity: str = "none",
) -> float:
    """Loss bound from per-candidate objective bounds and the simplified
    problem's selection.

    - ``none``: max(ub) - lb at the selected candidate;
    - ``overestimates`` (original values dominate the simplified ones):
      max(ub) - simplified value at the selection;
    - ``underestimates`` (original values never exceed the simplified
      ones): simplified value at the selection - lb there.

    A negative result means the supplied bounds contradict each other and
    raises InconsistentBounds rather than being clamped.
    """
    if monotonicity not in _MONOTONICITY:
        raise ValueError(f"unknown monotonicity mode {monotonicity!r}")
    values = np.asarray(values_simp, dtype=np.float64)
    ubs = np.asarray(ub_per_candidate, dtype=np.float64)
    if values.size != ubs.size:
        raise LengthMismatch("ub vector must align with the candidate values")
    if not 0 <= simplified_best < values.size:
        raise IndexOutOfRange(f"candidate index {simplified_best} outside 0..{values.size - 1}")

    if monotonicity == "overestimates":
        bound = float(ubs.max() - values[simplified_best])
    elif monotonicity == "underestimates":
        bound = float(values[simplified_best] - lb_simplified_best)
    else:
        bound = float(ubs.max() - lb_simplified_best)
    if bound < 0.0:
        raise InconsistentBounds(f"loss bound {bound} is negative; check the supplied bounds")
    return bound
