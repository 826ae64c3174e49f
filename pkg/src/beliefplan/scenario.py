"""Synthetic 2-D pose-SLAM worlds and planning-session execution.

The generator replaces a full robot stack with a seeded random walk:

- prior trajectory of SE(2) poses (x, y, theta) with odometry factors
  between consecutive poses, loop-closure factors between poses whose
  sampled positions fall within a radius, and a global anchor on pose 0;
- candidate trajectories branching from the last pose toward a shared
  goal, each with odometry factors along its new poses and predicted
  loop closures to nearby prior poses.

All factors are full relative-pose (or anchor) constraints whitened by the
same diagonal noise sqrt-information diag(1/pos_std, 1/pos_std, 1/ang_std).
That uniformity is what lets ``topological_constants`` derive exact
constants for the spanning-tree objective bounds: with it, the position
part of the whitened system is an orthogonal stamping of the anchored
graph incidence, so the information log-determinant is pinned to the tree
count up to a noise constant, plus an angular correction controlled by the
squared lever arms (scaled by the angular:position variance ratio).

A planning session evaluates all candidates on the original belief and on
each requested sparsified version, then reports values, selections, loss,
offsets, rank correlation, nonzero counts, timings, and loss bounds.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass

import numpy as np

from .belief import CandidateAction, GaussianBelief, VariableLayout, objective
from .bounds import (
    PoseGraph,
    TopologicalNoiseConfig,
    determinant_bounds,
    post_solution_loss_bound,
    topological_bounds,
)
from .decision import (
    action_consistent,
    balanced_offset_upper,
    offset,
    rank_correlation,
    simplification_loss,
)
from .errors import InfeasibleConfig, LayoutMismatch
from .sparse import SparseRowBlock, SparseSymmetric, cholesky
from .sparsify import SparsificationSpec, detect_involvement, sparsify_belief

DEFAULT_NOISE_RATIOS = (0.01, 0.25, 0.85)

SCENARIO_SCHEMA_VERSION = 1
REPORT_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int = 0
    n_prior_poses: int = 40
    world_extent: float = 20.0
    position_std: float = 0.1
    angular_std: float = 0.05
    loop_closure_radius: float = 2.0
    n_candidates: int = 6
    candidate_length: int = 4
    # prior loop closures only match poses this many steps back, keeping the
    # executed-trajectory factor graph (and its factor) affordably banded;
    # candidate loop closures are distance-gated only
    loop_index_window: int = 40

    def __post_init__(self):
        if self.n_prior_poses < 2:
            raise ValueError("need at least two prior poses")
        if self.loop_index_window < 2:
            raise ValueError("loop index window must be at least 2")
        if self.position_std <= 0 or self.angular_std <= 0:
            raise ValueError("noise stds must be positive")
        if self.loop_closure_radius <= 0:
            raise ValueError("loop closure radius must be positive")
        if self.n_candidates < 1 or self.candidate_length < 1:
            raise ValueError("need at least one candidate with one pose")
        if self.world_extent <= 0:
            raise ValueError("world extent must be positive")

    @property
    def noise_ratio(self) -> float:
        """Angular variance over position variance."""
        return (self.angular_std / self.position_std) ** 2


@dataclass(frozen=True)
class Factor:
    """One probabilistic constraint: a global anchor (i == j) or a relative
    pose measurement from pose ``i`` to pose ``j``."""

    kind: str  # anchor | odom | loop
    i: int
    j: int

    def __post_init__(self):
        if self.kind not in ("anchor", "odom", "loop"):
            raise ValueError(f"unknown factor kind {self.kind!r}")
        if (self.kind == "anchor") != (self.i == self.j):
            raise ValueError("anchor factors are unary; others connect distinct poses")


@dataclass(frozen=True)
class CandidatePlan:
    """Geometry behind one CandidateAction: its new pose means and the
    factors (over global pose ids) it would add."""

    candidate_id: int
    new_pose_ids: tuple
    new_pose_means: np.ndarray
    factors: tuple


@dataclass(frozen=True)
class Scenario:
    config: ScenarioConfig
    prior: GaussianBelief
    executed_path: np.ndarray
    prior_factors: tuple
    candidates: tuple
    plans: tuple
    pose_graph: PoseGraph

    @property
    def n_poses(self) -> int:
        return self.executed_path.shape[0]


# ---------------------------------------------------------------------------
# Whitened constraint rows
# ---------------------------------------------------------------------------


def _rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def noise_sqrt_info(cfg: ScenarioConfig) -> np.ndarray:
    w = 1.0 / cfg.position_std
    return np.diag([w, w, 1.0 / cfg.angular_std])


def _factor_blocks(factor: Factor, means: dict) -> list:
    """Unwhitened 3-row Jacobian blocks [(pose_id, 3x3 block), ...] of the
    relative-pose (or anchor) residual, linearized at the given means."""
    if factor.kind == "anchor":
        return [(factor.i, np.eye(3))]
    xa, ya, ta = means[factor.i]
    xb, yb, _ = means[factor.j]
    rot_t = _rotation(ta).T
    lever = np.array([xb - xa, yb - ya])
    s_t = np.array([[0.0, 1.0], [-1.0, 0.0]])  # transpose of the 90-degree rotation
    block_a = np.zeros((3, 3))
    block_a[:2, :2] = -rot_t
    block_a[:2, 2] = s_t @ rot_t @ lever
    block_a[2, 2] = -1.0
    block_b = np.zeros((3, 3))
    block_b[:2, :2] = rot_t
    block_b[2, 2] = 1.0
    return [(factor.i, block_a), (factor.j, block_b)]


def _whitened_rows(factor: Factor, means: dict, sqrt_info: np.ndarray, col_of_pose: dict):
    """Yield (cols, vals) sparse rows of the whitened factor Jacobian."""
    blocks = [(pid, sqrt_info @ blk) for pid, blk in _factor_blocks(factor, means)]
    blocks.sort(key=lambda item: col_of_pose[item[0]])
    for r in range(3):
        cols = []
        vals = []
        for pid, blk in blocks:
            base = col_of_pose[pid]
            for c in range(3):
                v = blk[r, c]
                if v != 0.0:
                    cols.append(base + c)
                    vals.append(v)
        yield np.asarray(cols, dtype=np.int64), np.asarray(vals, dtype=np.float64)


def build_collective_jacobian(
    factors,
    means: dict,
    layout: VariableLayout,
    sqrt_info: np.ndarray,
    new_pose_ids=(),
    new_pose_means=None,
    action_id: int = 0,
) -> CandidateAction:
    """Stack the whitened rows of ``factors`` into one CandidateAction.

    ``means`` maps global pose id to its (x, y, theta) linearization point,
    covering both prior poses (laid out by ``layout``) and the appended
    ``new_pose_ids`` (columns after the prior, in the given order).
    """
    col_of_pose = {}
    for blk in layout.blocks:
        col_of_pose[blk.block_id] = blk.offset
    base = layout.dim
    for k, pid in enumerate(new_pose_ids):
        if pid in col_of_pose:
            raise LayoutMismatch(f"new pose id {pid} collides with the prior layout")
        col_of_pose[pid] = base + 3 * k

    n_new = 3 * len(new_pose_ids)
    row_cols = []
    row_vals = []
    for factor in factors:
        for pid in ((factor.i,) if factor.kind == "anchor" else (factor.i, factor.j)):
            if pid not in col_of_pose:
                raise LayoutMismatch(f"factor references unknown pose {pid}")
        for cols, vals in _whitened_rows(factor, means, sqrt_info, col_of_pose):
            row_cols.append(cols)
            row_vals.append(vals)

    jac = SparseRowBlock(len(row_cols), layout.dim + n_new, tuple(row_cols), tuple(row_vals))
    if new_pose_means is None:
        predicted = np.empty(0)
    else:
        predicted = np.asarray(new_pose_means, dtype=np.float64).reshape(-1)
    return CandidateAction(
        action_id,
        jac,
        n_new_vars=n_new,
        predicted_new_means=predicted,
        new_blocks=(("pose", 3),) * len(new_pose_ids),
    )


def _information_from_rows(jac: SparseRowBlock) -> SparseSymmetric:
    """Accumulate the upper triangle of jac^T jac."""
    chunks_r, chunks_c, chunks_v = [], [], []
    for cols, vals in zip(jac.row_cols, jac.row_vals):
        m = cols.size
        if not m:
            continue
        ii, jj = np.triu_indices(m)
        chunks_r.append(cols[ii])
        chunks_c.append(cols[jj])
        chunks_v.append(vals[ii] * vals[jj])
    return SparseSymmetric.accumulate(
        jac.n_cols, np.concatenate(chunks_r), np.concatenate(chunks_c), np.concatenate(chunks_v)
    )


# ---------------------------------------------------------------------------
# Generation
# ---------------------------------------------------------------------------


def _sample_trajectory(cfg: ScenarioConfig, rng: np.random.Generator) -> np.ndarray:
    half = cfg.world_extent / 2.0
    poses = np.zeros((cfg.n_prior_poses, 3))
    poses[0, 2] = rng.uniform(-math.pi, math.pi)
    # curl the walk so it re-approaches itself and loop closures can form
    curl = rng.choice([-1.0, 1.0]) * 2.0 * math.pi / (cfg.n_prior_poses * rng.uniform(0.6, 1.4))
    heading = poses[0, 2]
    for k in range(1, cfg.n_prior_poses):
        heading += curl + rng.normal(0.0, 0.15)
        step = rng.uniform(0.6, 1.2)
        x = poses[k - 1, 0] + step * math.cos(heading)
        y = poses[k - 1, 1] + step * math.sin(heading)
        poses[k] = (np.clip(x, -half, half), np.clip(y, -half, half), _wrap(heading))
    return poses


def _wrap(theta: float) -> float:
    return math.atan2(math.sin(theta), math.cos(theta))


def _prior_loop_closures(poses: np.ndarray, radius: float, window: int, max_per_pose: int = 2) -> list:
    factors = []
    n = poses.shape[0]
    for j in range(2, n):
        lo = max(0, j - 1 - window)
        deltas = poses[lo: j - 1, :2] - poses[j, :2]
        dists = np.hypot(deltas[:, 0], deltas[:, 1])
        near = np.nonzero(dists <= radius)[0]
        if near.size:
            order = near[np.argsort(dists[near], kind="stable")][:max_per_pose]
            for i in sorted(order.tolist()):
                factors.append(Factor("loop", int(i) + lo, j))
    return factors


def _candidate_plans(
    cfg: ScenarioConfig, poses: np.ndarray, goal: np.ndarray, rng: np.random.Generator
) -> list:
    n = poses.shape[0]
    plans = []
    spread = np.linspace(-0.9, 0.9, cfg.n_candidates)
    for c in range(cfg.n_candidates):
        start = poses[n - 1, :2].copy()
        to_goal = goal - start
        base_heading = math.atan2(to_goal[1], to_goal[0])
        detour = spread[c] + rng.normal(0.0, 0.1)
        step = np.linalg.norm(to_goal) / cfg.candidate_length
        step = min(max(step, 0.5), 1.5)
        new_means = np.zeros((cfg.candidate_length, 3))
        at = start
        for t in range(cfg.candidate_length):
            # detour fades so every candidate closes in on the shared goal
            fade = 1.0 - t / max(cfg.candidate_length - 1, 1)
            heading = base_heading + detour * fade + rng.normal(0.0, 0.05)
            at = at + step * np.array([math.cos(heading), math.sin(heading)])
            new_means[t] = (at[0], at[1], _wrap(heading))
        new_ids = tuple(range(n, n + cfg.candidate_length))
        factors = [Factor("odom", n - 1, new_ids[0])]
        factors += [Factor("odom", new_ids[t], new_ids[t + 1]) for t in range(cfg.candidate_length - 1)]
        for t, pid in enumerate(new_ids):
            deltas = poses[:, :2] - new_means[t, :2]
            dists = np.hypot(deltas[:, 0], deltas[:, 1])
            near = np.nonzero(dists <= cfg.loop_closure_radius)[0]
            near = near[near != n - 1]  # the branching pose is already constrained
            order = near[np.argsort(dists[near], kind="stable")][:1]
            for q in order.tolist():
                factors.append(Factor("loop", int(q), pid))
        plans.append(
            CandidatePlan(c, new_ids, new_means, tuple(factors))
        )
    return plans


def generate(cfg: ScenarioConfig) -> Scenario:
    """Deterministically build a scenario from its config.

    Goal placement is re-sampled (boundedly) until at least one prior pose
    block stays uninvolved across all candidates whenever the prior has 10+
    poses; InfeasibleConfig is raised if no placement qualifies.
    """
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n_prior_poses
    poses = _sample_trajectory(cfg, rng)

    prior_factors = [Factor("anchor", 0, 0)]
    prior_factors += [Factor("odom", k, k + 1) for k in range(n - 1)]
    prior_factors += _prior_loop_closures(poses, cfg.loop_closure_radius, cfg.loop_index_window)

    layout = VariableLayout.from_sizes([3] * n, kind="pose")
    sqrt_info = noise_sqrt_info(cfg)
    means = {k: tuple(poses[k]) for k in range(n)}
    prior_rows = build_collective_jacobian(prior_factors, means, layout, sqrt_info).jacobian
    info = _information_from_rows(prior_rows)
    root = cholesky(info)
    prior = GaussianBelief(poses.reshape(-1), root, layout)

    half = cfg.world_extent / 2.0
    for _attempt in range(40):
        anchor_pose = int(rng.integers(0, n))
        goal = poses[anchor_pose, :2] + rng.normal(0.0, cfg.loop_closure_radius, size=2)
        goal = np.clip(goal, -half, half)
        plans = _candidate_plans(cfg, poses, goal, rng)
        candidates = []
        for plan in plans:
            cand_means = dict(means)
            for pid, pose in zip(plan.new_pose_ids, plan.new_pose_means):
                cand_means[pid] = tuple(pose)
            candidates.append(
                build_collective_jacobian(
                    plan.factors,
                    cand_means,
                    layout,
                    sqrt_info,
                    new_pose_ids=plan.new_pose_ids,
                    new_pose_means=plan.new_pose_means,
                    action_id=plan.candidate_id,
                )
            )
        mask = detect_involvement(layout, candidates)
        if n < 10 or mask.never_involved(layout):
            graph_edges = [(_graph_node(f.i), _graph_node(f.j)) if f.kind != "anchor" else (0, _graph_node(0)) for f in prior_factors]
            pose_graph = PoseGraph(n + 1, tuple(graph_edges))
            return Scenario(
                cfg,
                prior,
                poses,
                tuple(prior_factors),
                tuple(candidates),
                tuple(plans),
                pose_graph,
            )
    raise InfeasibleConfig(
        "could not place a goal leaving at least one prior pose uninvolved; "
        "shrink the loop-closure radius or use more prior poses"
    )


def _graph_node(pose_id: int) -> int:
    # node 0 is the ground node the anchor ties pose 0 to
    return pose_id + 1


def posterior_pose_graph(scenario: Scenario, plan: CandidatePlan) -> PoseGraph:
    """Pose graph of the prior plus one candidate's predicted factors."""
    n_nodes = scenario.n_poses + len(plan.new_pose_ids) + 1
    edges = list(scenario.pose_graph.edges)
    for f in plan.factors:
        edges.append((_graph_node(f.i), _graph_node(f.j)))
    return PoseGraph(n_nodes, tuple(edges))


# ---------------------------------------------------------------------------
# Topological bound constants for the uniform-noise factor model
# ---------------------------------------------------------------------------


def _lever_mass(scenario: Scenario, plan: CandidatePlan | None) -> float:
    """max over poses of the summed squared lever arms of factors whose
    residual is expressed in that pose's frame."""
    means = {k: scenario.executed_path[k] for k in range(scenario.n_poses)}
    factors = list(scenario.prior_factors)
    if plan is not None:
        for pid, pose in zip(plan.new_pose_ids, plan.new_pose_means):
            means[pid] = pose
        factors += list(plan.factors)
    mass: dict[int, float] = {}
    for f in factors:
        if f.kind == "anchor":
            continue
        dx = means[f.j][0] - means[f.i][0]
        dy = means[f.j][1] - means[f.i][1]
        mass[f.i] = mass.get(f.i, 0.0) + dx * dx + dy * dy
    return max(mass.values(), default=0.0)


def topological_constants(
    scenario: Scenario, plan: CandidatePlan | None = None, ratio: float | None = None
) -> TopologicalNoiseConfig:
    """Noise constants making the spanning-tree bounds valid for the
    information log-determinant of this scenario's (posterior) belief.

    With every factor whitened by the same diag(1/pos_std, 1/pos_std,
    1/ang_std), the position sub-system is an orthogonal stamping of the
    anchored incidence, so

        ln|Lambda| >= 3 ln t(G) + n_poses * (2 ln w_p + ln w_th),

    and the angular lever-arm surplus is diagonal-bounded by
    psi = ratio * max_i sum_{factors framed at i} |lever|^2, giving the
    matching Hadamard upper bound.  ``ratio`` overrides the scenario's
    actual angular:position variance ratio to explore hypothetical noise
    models (the Hadamard side is only guaranteed when ratio >= actual).
    """
    cfg = scenario.config
    actual_ratio = cfg.noise_ratio
    use_ratio = actual_ratio if ratio is None else float(ratio)
    w_p = 1.0 / cfg.position_std ** 2
    ang_var = use_ratio * cfg.position_std ** 2
    w_th = 1.0 / ang_var
    n_poses = scenario.n_poses + (len(plan.new_pose_ids) if plan is not None else 0)
    mu = n_poses * (2.0 * math.log(w_p) + math.log(w_th))
    psi = use_ratio * _lever_mass(scenario, plan)
    return TopologicalNoiseConfig(mu=mu, psi=psi, ratio=use_ratio)


def objective_scale_bounds(lb_logdet: float, ub_logdet: float, n_vars: int) -> tuple[float, float]:
    """Convert log-determinant bounds to objective-scale bounds via the
    increasing affine map J = (x - N ln(2 pi e)) / 2."""
    from .belief import LN_2PI_E

    c = n_vars * LN_2PI_E
    return 0.5 * (lb_logdet - c), 0.5 * (ub_logdet - c)


# ---------------------------------------------------------------------------
# Session execution
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModeResult:
    label: str
    values: np.ndarray
    best_index: int
    sparsify_seconds: float
    evaluate_seconds: float
    candidate_seconds: np.ndarray
    root_nnz: int
    info_nnz: int
    loss: float | None = None
    offset_identity: float | None = None
    offset_shift_upper: float | None = None
    rho: float | None = None
    consistent_exact: bool | None = None
    consistent_tol: bool | None = None

    @property
    def total_seconds(self) -> float:
        return self.sparsify_seconds + self.evaluate_seconds


@dataclass(frozen=True)
class SessionReport:
    seed: int
    prior_dim: int
    n_candidates: int
    uninvolved_block_ratio: float
    noise_ratios: tuple
    baseline: ModeResult
    modes: tuple
    bound_lb_top: np.ndarray
    bound_ub_top: np.ndarray
    bound_lb_det: np.ndarray
    bound_ub_det: np.ndarray
    loss_bounds: dict
    consistency_tolerance: float = 1e-9

    def mode(self, label: str) -> ModeResult:
        for m in self.modes:
            if m.label == label:
                return m
        raise KeyError(f"mode {label!r} not in report")

    def all_results(self) -> tuple:
        return (self.baseline,) + self.modes


def _median_timed(fn, repeats: int):
    """Run fn() ``repeats`` times; return (last result, median seconds)."""
    times = []
    result = None
    for _ in range(max(1, repeats)):
        t0 = time.perf_counter()
        result = fn()
        times.append(time.perf_counter() - t0)
    return result, float(np.median(times))


def _evaluate_all(belief: GaussianBelief, candidates, repeats: int, max_workers: int = 1):
    per_candidate = np.zeros(len(candidates))
    values = np.zeros(len(candidates))

    def timed(cand):
        return _median_timed(lambda: objective(belief, cand), repeats)

    if max_workers > 1 and len(candidates) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            outcomes = list(pool.map(timed, candidates))
    else:
        outcomes = [timed(c) for c in candidates]
    for idx, (val, secs) in enumerate(outcomes):
        values[idx] = val
        per_candidate[idx] = secs
    return values, per_candidate


def run_session(
    scenario: Scenario,
    modes=(SparsificationSpec.uninvolved(), SparsificationSpec.full()),
    noise_ratios=DEFAULT_NOISE_RATIOS,
    timing_repeats: int = 1,
    consistency_tolerance: float = 1e-9,
    max_workers: int = 1,
) -> SessionReport:
    """Solve the decision problem on the original belief and on each
    sparsified version, collecting comparison metrics and loss bounds.

    The original problem is always evaluated (it provides the ground-truth
    values for loss and offsets); a requested "none" mode is reported as
    that baseline.  Wall-clock figures are medians over ``timing_repeats``
    repetitions of each phase.
    """
    candidates = scenario.candidates
    layout = scenario.prior.layout
    mask = detect_involvement(layout, candidates)
    never = mask.never_involved(layout)
    uninvolved_ratio = len(never) / len(layout.block_ids)

    values_orig, cand_secs = _evaluate_all(scenario.prior, candidates, timing_repeats, max_workers)
    root_nnz, info_nnz = scenario.prior.root.nnz, scenario.prior.root.gram().nnz
    baseline = ModeResult(
        label="original",
        values=values_orig,
        best_index=int(np.argmax(values_orig)),
        sparsify_seconds=0.0,
        evaluate_seconds=float(cand_secs.sum()),
        candidate_seconds=cand_secs,
        root_nnz=root_nnz,
        info_nnz=info_nnz,
    )

    mode_results = []
    for spec in modes:
        if spec.mode == "none":
            continue
        sparsified, sp_secs = _median_timed(
            lambda s=spec: sparsify_belief(scenario.prior, s, mask), timing_repeats
        )
        values, cand_secs_m = _evaluate_all(sparsified, candidates, timing_repeats, max_workers)
        best = int(np.argmax(values))
        r_nnz, i_nnz = sparsified.root.nnz, sparsified.root.gram().nnz
        mode_results.append(
            ModeResult(
                label=spec.mode,
                values=values,
                best_index=best,
                sparsify_seconds=sp_secs,
                evaluate_seconds=float(cand_secs_m.sum()),
                candidate_seconds=cand_secs_m,
                root_nnz=r_nnz,
                info_nnz=i_nnz,
                loss=simplification_loss(values_orig, best),
                offset_identity=offset(values_orig, values),
                offset_shift_upper=balanced_offset_upper(values_orig, values),
                rho=rank_correlation(values_orig, values),
                consistent_exact=action_consistent(values_orig, values),
                consistent_tol=_consistent_tol(values_orig, values, consistency_tolerance),
            )
        )

    # per-candidate objective bounds on the ORIGINAL problem
    n_cand = len(candidates)
    lb_top = np.zeros(n_cand)
    ub_top = np.zeros(n_cand)
    lb_det = np.zeros(n_cand)
    ub_det = np.zeros(n_cand)
    topo_by_ratio = {float(r): (np.zeros(n_cand), np.zeros(n_cand)) for r in noise_ratios}
    for idx, (cand, plan) in enumerate(zip(candidates, scenario.plans)):
        graph = posterior_pose_graph(scenario, plan)
        n_vars = 3 * (scenario.n_poses + len(plan.new_pose_ids))
        lbl, ubl = topological_bounds(graph, topological_constants(scenario, plan))
        lb_top[idx], ub_top[idx] = objective_scale_bounds(lbl, ubl, n_vars)
        lb_det[idx], ub_det[idx] = determinant_bounds(scenario.prior, cand)
        for r in noise_ratios:
            lbr, ubr = topological_bounds(graph, topological_constants(scenario, plan, ratio=r))
            jl, ju = objective_scale_bounds(lbr, ubr, n_vars)
            topo_by_ratio[float(r)][0][idx] = jl
            topo_by_ratio[float(r)][1][idx] = ju

    loss_bounds: dict = {}
    for res in mode_results:
        per_mode = {
            "topological": post_solution_loss_bound(res.values, res.best_index, ub_top, float(lb_top[res.best_index])),
            "determinant": post_solution_loss_bound(res.values, res.best_index, ub_det, float(lb_det[res.best_index])),
            "topological_by_ratio": {
                r: post_solution_loss_bound(res.values, res.best_index, ub_r, float(lb_r[res.best_index]))
                for r, (lb_r, ub_r) in topo_by_ratio.items()
            },
        }
        loss_bounds[res.label] = per_mode

    return SessionReport(
        seed=scenario.config.seed,
        prior_dim=scenario.prior.dim,
        n_candidates=n_cand,
        uninvolved_block_ratio=uninvolved_ratio,
        noise_ratios=tuple(float(r) for r in noise_ratios),
        baseline=baseline,
        modes=tuple(mode_results),
        bound_lb_top=lb_top,
        bound_ub_top=ub_top,
        bound_lb_det=lb_det,
        bound_ub_det=ub_det,
        loss_bounds=loss_bounds,
        consistency_tolerance=consistency_tolerance,
    )


def _consistent_tol(v1: np.ndarray, v2: np.ndarray, tol: float) -> bool:
    """Pairwise-order agreement treating differences within tol as ties."""
    d1 = v1[:, None] - v1[None, :]
    d2 = v2[:, None] - v2[None, :]
    s1 = np.where(np.abs(d1) <= tol, 0, np.sign(d1))
    s2 = np.where(np.abs(d2) <= tol, 0, np.sign(d2))
    return bool(np.array_equal(s1, s2))


# ---------------------------------------------------------------------------
# Serialization: scenario files and session reports
# ---------------------------------------------------------------------------


def _factor_doc(f: Factor, sqrt_info: np.ndarray) -> dict:
    return {
        "type": f.kind,
        "i": f.i,
        "j": f.j,
        "sqrt_info": [float(v) for v in sqrt_info.reshape(-1)],
    }


def scenario_to_json(scenario: Scenario) -> str:
    """Schema: {seed, config, poses, factors, candidates}; the anchor on
    pose 0 is implicit (re-added on load), factor types are odom|loop."""
    cfg = scenario.config
    sqrt_info = noise_sqrt_info(cfg)
    doc = {
        "schema_version": SCENARIO_SCHEMA_VERSION,
        "seed": cfg.seed,
        "config": {
            "n_prior_poses": cfg.n_prior_poses,
            "world_extent": cfg.world_extent,
            "position_std": cfg.position_std,
            "angular_std": cfg.angular_std,
            "loop_closure_radius": cfg.loop_closure_radius,
            "n_candidates": cfg.n_candidates,
            "candidate_length": cfg.candidate_length,
            "loop_index_window": cfg.loop_index_window,
        },
        "poses": [
            {"id": k, "x": float(p[0]), "y": float(p[1]), "theta": float(p[2])}
            for k, p in enumerate(scenario.executed_path)
        ],
        "factors": [
            _factor_doc(f, sqrt_info) for f in scenario.prior_factors if f.kind != "anchor"
        ],
        "candidates": [
            {
                "id": plan.candidate_id,
                "new_poses": [
                    {"id": int(pid), "x": float(p[0]), "y": float(p[1]), "theta": float(p[2])}
                    for pid, p in zip(plan.new_pose_ids, plan.new_pose_means)
                ],
                "factors": [_factor_doc(f, sqrt_info) for f in plan.factors],
            }
            for plan in scenario.plans
        ],
    }
    return json.dumps(doc, indent=1)


def scenario_from_json(text: str) -> Scenario:
    doc = json.loads(text)
    cfg = ScenarioConfig(
        seed=int(doc["seed"]),
        n_prior_poses=int(doc["config"]["n_prior_poses"]),
        world_extent=float(doc["config"]["world_extent"]),
        position_std=float(doc["config"]["position_std"]),
        angular_std=float(doc["config"]["angular_std"]),
        loop_closure_radius=float(doc["config"]["loop_closure_radius"]),
        n_candidates=int(doc["config"]["n_candidates"]),
        candidate_length=int(doc["config"]["candidate_length"]),
        loop_index_window=int(doc["config"].get("loop_index_window", 40)),
    )
    poses = np.zeros((len(doc["poses"]), 3))
    for entry in doc["poses"]:
        poses[int(entry["id"])] = (entry["x"], entry["y"], entry["theta"])
    n = poses.shape[0]

    prior_factors = [Factor("anchor", 0, 0)]
    for fd in doc["factors"]:
        prior_factors.append(Factor(fd["type"], int(fd["i"]), int(fd["j"])))

    layout = VariableLayout.from_sizes([3] * n, kind="pose")
    sqrt_info = noise_sqrt_info(cfg)
    means = {k: tuple(poses[k]) for k in range(n)}
    prior_rows = build_collective_jacobian(prior_factors, means, layout, sqrt_info).jacobian
    root = cholesky(_information_from_rows(prior_rows))
    prior = GaussianBelief(poses.reshape(-1), root, layout)

    plans = []
    candidates = []
    for cd in doc["candidates"]:
        new_ids = tuple(int(p["id"]) for p in cd["new_poses"])
        new_means = np.array([[p["x"], p["y"], p["theta"]] for p in cd["new_poses"]])
        factors = tuple(Factor(fd["type"], int(fd["i"]), int(fd["j"])) for fd in cd["factors"])
        plan = CandidatePlan(int(cd["id"]), new_ids, new_means, factors)
        plans.append(plan)
        cand_means = dict(means)
        for pid, pose in zip(new_ids, new_means):
            cand_means[pid] = tuple(pose)
        candidates.append(
            build_collective_jacobian(
                factors,
                cand_means,
                layout,
                sqrt_info,
                new_pose_ids=new_ids,
                new_pose_means=new_means,
                action_id=plan.candidate_id,
            )
        )

    graph_edges = [
        (0, _graph_node(0)) if f.kind == "anchor" else (_graph_node(f.i), _graph_node(f.j))
        for f in prior_factors
    ]
    pose_graph = PoseGraph(n + 1, tuple(graph_edges))
    return Scenario(cfg, prior, poses, tuple(prior_factors), tuple(candidates), tuple(plans), pose_graph)


CANDIDATE_CSV_BASE_COLUMNS = ("candidate_id",)
CANDIDATE_CSV_BOUND_COLUMNS = ("lb_top", "ub_top", "lb_det", "ub_det")


def report_csv_columns(report: SessionReport) -> tuple:
    labels = [res.label for res in report.all_results()]
    cols = list(CANDIDATE_CSV_BASE_COLUMNS)
    cols += [f"j_{label}" for label in labels]
    cols += [f"t_{label}" for label in labels]
    cols += list(CANDIDATE_CSV_BOUND_COLUMNS)
    return tuple(cols)


def report_to_csv(report: SessionReport) -> str:
    """One row per candidate: objective values and evaluation seconds per
    configuration, then original-problem objective bounds."""
    cols = report_csv_columns(report)
    lines = [",".join(cols)]
    results = report.all_results()
    for idx in range(report.n_candidates):
        row = [str(idx)]
        row += [f"{res.values[idx]:.12g}" for res in results]
        row += [f"{res.candidate_seconds[idx]:.6g}" for res in results]
        row += [
            f"{report.bound_lb_top[idx]:.12g}",
            f"{report.bound_ub_top[idx]:.12g}",
            f"{report.bound_lb_det[idx]:.12g}",
            f"{report.bound_ub_det[idx]:.12g}",
        ]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def _mode_doc(res: ModeResult) -> dict:
    doc = {
        "label": res.label,
        "values": res.values.tolist(),
        "best_index": res.best_index,
        "sparsify_seconds": res.sparsify_seconds,
        "evaluate_seconds": res.evaluate_seconds,
        "root_nnz": res.root_nnz,
        "info_nnz": res.info_nnz,
    }
    if res.loss is not None:
        doc.update(
            loss=res.loss,
            offset_identity=res.offset_identity,
            offset_shift_upper=res.offset_shift_upper,
            rho=res.rho,
            consistent_exact=res.consistent_exact,
            consistent_tol=res.consistent_tol,
        )
    return doc


def report_to_json(report: SessionReport) -> str:
    doc = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "seed": report.seed,
        "prior_dim": report.prior_dim,
        "n_candidates": report.n_candidates,
        "uninvolved_block_ratio": report.uninvolved_block_ratio,
        "noise_ratios": list(report.noise_ratios),
        "consistency_tolerance": report.consistency_tolerance,
        "baseline": _mode_doc(report.baseline),
        "modes": [_mode_doc(res) for res in report.modes],
        "bounds": {
            "lb_top": report.bound_lb_top.tolist(),
            "ub_top": report.bound_ub_top.tolist(),
            "lb_det": report.bound_lb_det.tolist(),
            "ub_det": report.bound_ub_det.tolist(),
        },
        "loss_bounds": {
            label: {
                "topological": fam["topological"],
                "determinant": fam["determinant"],
                "topological_by_ratio": {str(r): v for r, v in fam["topological_by_ratio"].items()},
            }
            for label, fam in report.loss_bounds.items()
        },
    }
    return json.dumps(doc, indent=1)
