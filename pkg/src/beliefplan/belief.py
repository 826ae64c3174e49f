"""Gaussian beliefs in square-root information form.

A belief is N(mean, Lambda^{-1}) with Lambda = R^T R held as the upper
triangular factor R, plus a block layout describing how scalar variables
group into poses/landmarks/generic blocks.

Candidate actions carry a whitened constraint-row block (noise square-root
information already folded into each row) spanning the prior variables plus
any newly introduced ones.  Under most-likely observations the information
update is deterministic, so propagation only re-factorizes and appends the
predicted means; the planning objective is the (negated, normalized)
posterior entropy evaluated through the factor diagonal.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import mmio
from .errors import DimensionMismatch, EvaluationError
from .sparse import SparseRowBlock, UpperTriangular, logdet_triangular, lowrank_update

LN_2PI_E = math.log(2.0 * math.pi) + 1.0

_BLOCK_KINDS = ("pose", "landmark", "generic")


@dataclass(frozen=True)
class LayoutBlock:
    block_id: int
    kind: str
    size: int
    offset: int

    def __post_init__(self):
        if self.kind not in _BLOCK_KINDS:
            raise ValueError(f"unknown block kind {self.kind!r}")
        if self.size <= 0:
            raise ValueError("block size must be positive")

    @property
    def scalar_indices(self) -> np.ndarray:
        return np.arange(self.offset, self.offset + self.size, dtype=np.int64)


@dataclass(frozen=True)
class VariableLayout:
    """Ordered block structure of the state vector."""

    blocks: tuple

    def __post_init__(self):
        blocks = tuple(self.blocks)
        if not blocks:
            raise ValueError("layout must contain at least one block")
        offset = 0
        seen = set()
        for blk in blocks:
            if blk.offset != offset:
                raise ValueError("block offsets must be contiguous and increasing")
            if blk.block_id in seen:
                raise ValueError(f"duplicate block id {blk.block_id}")
            seen.add(blk.block_id)
            offset += blk.size
        object.__setattr__(self, "blocks", blocks)

    @classmethod
    def from_sizes(cls, sizes, kind: str = "generic", ids=None) -> "VariableLayout":
        ids = range(len(sizes)) if ids is None else ids
        blocks = []
        offset = 0
        for bid, size in zip(ids, sizes):
            blocks.append(LayoutBlock(int(bid), kind, int(size), offset))
            offset += int(size)
        return cls(tuple(blocks))

    @property
    def dim(self) -> int:
        last = self.blocks[-1]
        return last.offset + last.size

    @property
    def block_ids(self) -> tuple:
        return tuple(blk.block_id for blk in self.blocks)

    def block(self, block_id: int) -> LayoutBlock:
        for blk in self.blocks:
            if blk.block_id == block_id:
                return blk
        raise KeyError(f"unknown block id {block_id}")

    def block_of_scalar(self) -> np.ndarray:
        """Map each scalar index to the id of its block."""
        out = np.empty(self.dim, dtype=np.int64)
        for blk in self.blocks:
            out[blk.offset: blk.offset + blk.size] = blk.block_id
        return out

    def scalar_indices(self, block_ids) -> np.ndarray:
        """Sorted scalar indices covered by the given block ids."""
        parts = [self.block(bid).scalar_indices for bid in block_ids]
        if not parts:
            return np.empty(0, dtype=np.int64)
        return np.sort(np.concatenate(parts))

    def extended(self, new_blocks) -> "VariableLayout":
        """Append ``(kind, size)`` blocks, assigning fresh ids."""
        next_id = max(self.block_ids) + 1
        offset = self.dim
        added = []
        for kind, size in new_blocks:
            added.append(LayoutBlock(next_id, kind, int(size), offset))
            next_id += 1
            offset += int(size)
        return VariableLayout(self.blocks + tuple(added))


@dataclass(frozen=True)
class CandidateAction:
    """One candidate control sequence, linearized and whitened.

    ``jacobian`` spans the prior variables followed by ``n_new_vars``
    appended ones; ``predicted_new_means`` are the motion-model predictions
    for those appended variables.  ``new_blocks`` optionally describes how
    the appended scalars group into layout blocks (defaults to one generic
    block).
    """

    action_id: int
    jacobian: SparseRowBlock
    n_new_vars: int = 0
    predicted_new_means: np.ndarray = field(default_factory=lambda: np.empty(0))
    new_blocks: tuple = ()

    def __post_init__(self):
        means = np.asarray(self.predicted_new_means, dtype=np.float64)
        if means.size != self.n_new_vars:
            raise ValueError("predicted_new_means length must equal n_new_vars")
        new_blocks = tuple(self.new_blocks)
        if not new_blocks and self.n_new_vars:
            new_blocks = (("generic", self.n_new_vars),)
        if sum(size for _, size in new_blocks) != self.n_new_vars:
            raise ValueError("new_blocks sizes must sum to n_new_vars")
        object.__setattr__(self, "predicted_new_means", means)
        object.__setattr__(self, "new_blocks", new_blocks)

    @property
    def prior_dim(self) -> int:
        return self.jacobian.n_cols - self.n_new_vars


@dataclass(frozen=True)
class GaussianBelief:
    mean: np.ndarray
    root: UpperTriangular
    layout: VariableLayout

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        if mean.ndim != 1 or mean.size != self.root.dim:
            raise ValueError("mean length must equal factor dimension")
        if self.layout.dim != self.root.dim:
            raise ValueError("layout size must equal factor dimension")
        object.__setattr__(self, "mean", mean)

    @property
    def dim(self) -> int:
        return self.root.dim


def entropy(b: GaussianBelief) -> float:
    """Differential entropy 0.5 * (N ln(2*pi*e) - ln|Lambda|)."""
    return 0.5 * (b.dim * LN_2PI_E - logdet_triangular(b.root))


def _check_compatible(b: GaussianBelief, a: CandidateAction):
    if a.jacobian.n_cols != b.dim + a.n_new_vars:
        raise DimensionMismatch(
            f"action {a.action_id}: jacobian spans {a.jacobian.n_cols} columns, "
            f"belief dim {b.dim} + {a.n_new_vars} new"
        )


def posterior_root(b: GaussianBelief, a: CandidateAction) -> UpperTriangular:
    _check_compatible(b, a)
    return lowrank_update(b.root, a.jacobian, a.n_new_vars)


def objective(b: GaussianBelief, a: CandidateAction) -> float:
    """Posterior-information objective 0.5 * (ln|Lambda + U^T U| - N ln(2*pi*e)).

    Evaluated through the updated factor diagonal, so cost tracks the factor
    sparsity rather than the posterior dimension cubed.  Higher is better
    (less posterior uncertainty); the value may be negative because of the
    normalization term, and is reported as-is.
    """
    root_plus = posterior_root(b, a)
    n_post = b.dim + a.n_new_vars
    return 0.5 * (logdet_triangular(root_plus) - n_post * LN_2PI_E)


def propagate(b: GaussianBelief, a: CandidateAction) -> GaussianBelief:
    """Posterior belief under most-likely observations.

    Innovations vanish, so the mean is the prior mean with the predicted
    means of the appended variables concatenated; only the factor updates.
    """
    root_plus = posterior_root(b, a)
    mean = np.concatenate([b.mean, a.predicted_new_means])
    layout = b.layout.extended(a.new_blocks) if a.n_new_vars else b.layout
    return GaussianBelief(mean, root_plus, layout)


def evaluate_candidates(b: GaussianBelief, candidates, max_workers: int | None = None) -> np.ndarray:
    """Objective values for every candidate, in candidate order.

    Evaluations are independent and may fan out to a thread pool; the
    result vector order never depends on completion order.  Failures are
    re-raised tagged with the offending candidate id.
    """
    def one(a: CandidateAction) -> float:
        try:
            return objective(b, a)
        except Exception as e:  # noqa: BLE001 - tagged and re-raised
            raise EvaluationError(a.action_id, e) from e

    if max_workers is not None and max_workers > 1 and len(candidates) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            return np.array(list(pool.map(one, candidates)))
    return np.array([one(a) for a in candidates])


def nnz_report(b: GaussianBelief) -> tuple[int, int]:
    """(stored entries of the root factor, upper-triangle entries of R^T R)."""
    return b.root.nnz, b.root.gram().nnz


# ---------------------------------------------------------------------------
# Serialization: JSON header (layout, mean) + Matrix Market payload (root)
# ---------------------------------------------------------------------------


def belief_to_json(b: GaussianBelief) -> str:
    doc = {
        "layout": [
            {"id": blk.block_id, "kind": blk.kind, "size": blk.size} for blk in b.layout.blocks
        ],
        "mean": b.mean.tolist(),
        "root_mm": mmio.triangular_to_mm(b.root),
    }
    return json.dumps(doc, indent=1)


def belief_from_json(text: str) -> GaussianBelief:
    doc = json.loads(text)
    blocks = []
    offset = 0
    for entry in doc["layout"]:
        blocks.append(LayoutBlock(int(entry["id"]), entry["kind"], int(entry["size"]), offset))
        offset += int(entry["size"])
    layout = VariableLayout(tuple(blocks))
    root = mmio.mm_to_triangular(doc["root_mm"])
    return GaussianBelief(np.asarray(doc["mean"], dtype=np.float64), root, layout)
