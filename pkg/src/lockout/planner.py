"""Constrained step planner and path driver.

Each iteration linearizes the loss and the penalty around the current point
and solves the resulting budgeted allocation problem in closed form: penalized
parameters whose descent direction shrinks them move freely and donate budget;
the rest compete for the remaining budget in order of benefit-to-cost ratio
gamma = |g| / (p + eps).  A parameter whose applied update would cross zero is
set to exactly zero and stays there until the allocation re-selects it.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .network import backward, forward, loss_value
from .optim import OptimizerKind, TrainingDivergedError, optimizer_step
from .pathlog import PathLog, PathPoint
from .penalties import PenaltySpec, RegularizedSelection, penalty_slope, penalty_value

FREE, DS, DSC = 0, 1, 2


class PathDivergedError(TrainingDivergedError):
    def __init__(self, message, iteration=None, partial_log=None):
        super().__init__(message, iteration=iteration)
        self.partial_log = partial_log


@dataclass(frozen=True)
class LockoutConfig:
    penalty: PenaltySpec
    selection: RegularizedSelection
    optimizer: OptimizerKind = OptimizerKind("gradient_descent", 1e-2)
    epsilon: float = 1e-8
    delta_t: float = None  # None: (t_start - t_floor) / (10 * |selection|)
    max_iterations: int = 1000
    init_mode: str = "from_unconstrained"
    t_floor: float = 0.0
    inner_steps: int = 1  # planner steps per t decrement
    phase1_max_iterations: int = 500
    phase1_step_tol: float = 1e-8
    val_stride: int = 1
    snapshot_stride: int = 0  # 0: auto (<= 200 snapshots per run)

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.delta_t is not None and self.delta_t < 0:
            raise ValueError("delta_t must be nonnegative")
        # t_floor may be negative: the logarithmic penalty is negative at
        # w = 0, so meaningful budgets for it are negative too
        if self.init_mode not in ("from_unconstrained", "from_early_stopping"):
            raise ValueError(f"unknown init_mode {self.init_mode!r}")
        if len(self.selection) == 0:
            raise ValueError("selection must be non-empty")


@dataclass
class StepPlan:
    """Per-iteration artifacts of the linearized allocation."""

    g: np.ndarray          # negative loss gradient, all parameters
    p: np.ndarray          # penalty slopes over the selection
    gamma: np.ndarray      # |g| / (p + eps) over the selection
    classes: np.ndarray    # FREE / DS / DSC per selected parameter
    order: np.ndarray      # DSC positions (into the selection), gamma descending
    t_ds: float            # budget donated by the DS set
    slack: float           # t - penalty(current) over the selection
    delta_j: np.ndarray    # cumulative budget terms, aligned with `order`
    update: np.ndarray     # proposed delta-w for every parameter


@dataclass
class LockoutState:
    params: np.ndarray
    t: float
    iteration: int = 0
    optimizer_state: object = None
    phase: str = "descending"


def classify(w, g, p):
    """FREE iff p == 0; DS iff p > 0, w != 0 and sign(w) != sign(g);
    DSC otherwise (including every zero-valued parameter with p > 0)."""
    w = np.asarray(w, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    cls = np.full(w.shape, DSC, dtype=np.int8)
    cls[p == 0] = FREE
    # sign(w) != sign(g) with w != 0 is exactly w * g <= 0
    ds = (p > 0) & (w != 0) & (w * g <= 0)
    cls[ds] = DS
    return cls


def plan_linear_step(w, g, p, s, slack, eps=1e-8):
    """Closed-form optimum of the per-step linearized problem.

    Arguments are aligned arrays over the constrained subset: current values
    w, negative gradients g, penalty slopes p, trust-region radii s, plus the
    scalar budget slack.  Returns (delta_w, plan metadata).
    """
    w = np.asarray(w, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    if not (np.all(np.isfinite(g)) and np.all(np.isfinite(s))):
        raise TrainingDivergedError("non-finite gradient or step size")
    cls = classify(w, g, p)
    sgn_g = np.sign(g)
    # FREE and DS take the full move sign(g) * s; DSC entries are
    # overwritten with the budgeted allocation below.
    dw = sgn_g * s
    ds = cls == DS
    t_ds = float(np.sum(p[ds] * s[ds]))
    gamma = np.abs(g) / (p + eps)
    idx = np.flatnonzero(cls == DSC)
    # gamma descending, ties by ascending flat index; the fast introsort is
    # used unless exact ties are present (then a stable sort restores the
    # deterministic tie order)
    key = -gamma[idx]
    perm = np.argsort(key)
    sorted_key = key[perm]
    if sorted_key.size > 1 and np.any(sorted_key[1:] == sorted_key[:-1]):
        perm = np.argsort(key, kind="stable")
    order = idx[perm]
    b = p[order] * s[order]
    nz = w[order] != 0
    c = np.where(nz, b, 0.0)
    # Two prefix-sum passes: budget still recoverable after J, budget
    # consumed before J.
    suffix_after = np.cumsum(c[::-1])[::-1] - c
    lower = np.cumsum(b) - b
    delta = suffix_after + (slack + t_ds) - lower
    mag = np.minimum(s[order], np.abs(delta) / (p[order] + eps))
    step = sgn_g[order] * np.sign(delta) * mag
    step[(delta <= 0) & ~nz] = 0.0
    dw[order] = step
    return dw, {
        "classes": cls, "gamma": gamma, "order": order,
        "t_ds": t_ds, "delta_j": delta,
    }


def plan_step(state, cfg, g, s):
    """Plan one constrained update from per-parameter optimizer magnitudes s.

    Non-selected and FREE parameters take the full unconstrained move
    sign(g) * s; the selected remainder follows the closed-form allocation.
    """
    g = np.asarray(g, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    sel = cfg.selection.indices
    w = state.params
    p_sel = penalty_slope(cfg.penalty, w, cfg.selection)
    slack = state.t - penalty_value(cfg.penalty, w, cfg.selection)
    update = np.sign(g) * s
    dw_sel, detail = plan_linear_step(w[sel], g[sel], p_sel, s[sel], slack,
                                      eps=cfg.epsilon)
    update[sel] = dw_sel
    return StepPlan(
        g=g, p=p_sel, gamma=detail["gamma"], classes=detail["classes"],
        order=detail["order"], t_ds=detail["t_ds"], slack=slack,
        delta_j=detail["delta_j"], update=update,
    )


def apply_step(state, cfg, plan):
    """Apply a plan; selected parameters whose update crosses zero land on
    exactly 0.  Returns the indices that crossed."""
    sel = cfg.selection.indices
    old_sel = state.params[sel]
    state.params = state.params + plan.update
    new_sel = state.params[sel]
    crossed = sel[np.sign(new_sel) * np.sign(old_sel) == -1.0]
    state.params[crossed] = 0.0
    state.iteration += 1
    return crossed


def _nonzero_count(params, sel):
    return int(np.count_nonzero(params[sel.indices]))


def run_path(spec, start_params, data, cfg):
    """Traverse the regularization path and record it.

    from_unconstrained: the budget starts at the penalty of the start point
    and is decremented by delta_t per recorded point (never below t_floor).
    from_early_stopping: the budget is first held constant until the path is
    reached (fixed iteration budget, or a vanishing planned step), then the
    descent proceeds as above.
    """
    values = np.array(
        np.asarray(getattr(start_params, "values", start_params)),
        dtype=np.float64,
    )
    X_tr, y_tr = data.subset("train")
    try:
        X_va, y_va = data.subset("validation")
    except KeyError:
        X_va, y_va = None, None
    sel = cfg.selection
    t_start = penalty_value(cfg.penalty, values, sel)
    delta_t = cfg.delta_t
    if delta_t is None:
        delta_t = max(t_start - cfg.t_floor, 0.0) / (10.0 * len(sel))
    state = LockoutState(params=values, t=t_start, phase="reaching_path")
    log = PathLog(config={
        "penalty": cfg.penalty.kind, "beta": cfg.penalty.beta,
        "optimizer": cfg.optimizer.kind,
        "learning_rate": cfg.optimizer.learning_rate,
        "epsilon": cfg.epsilon, "delta_t": delta_t,
        "init_mode": cfg.init_mode, "t_floor": cfg.t_floor,
        "t_start": t_start, "inner_steps": cfg.inner_steps,
        "selection_size": len(sel),
    })
    total_points = cfg.max_iterations + 1
    if cfg.init_mode == "from_early_stopping":
        total_points += cfg.phase1_max_iterations
    snap_stride = cfg.snapshot_stride
    if snap_stride == 0:
        snap_stride = max(1, total_points // 200)
    best = [np.inf, np.inf]  # (val loss, nonzero count) of best point so far

    def record(phase):
        i = len(log.points)
        val = np.nan
        if X_va is not None and (i % cfg.val_stride == 0):
            val = loss_value(spec, state.params, X_va, y_va)
        nnz = _nonzero_count(state.params, sel)
        snap = state.params.copy() if (i % snap_stride == 0) else None
        # Keep a snapshot whenever this point becomes the selection-rule
        # best (min val loss, then min nonzero count, then latest).
        if np.isfinite(val) and (val, nnz) <= (best[0], best[1]):
            best[0], best[1] = val, nnz
            snap = state.params.copy()
        log.append(PathPoint(
            iteration=i, phase=phase, t=state.t,
            train_loss=loss_value(spec, state.params, X_tr, y_tr),
            val_loss=val, nonzero_count=nnz,
            snapshot=snap,
        ))

    def one_step():
        loss, grad = backward(spec, state.params, X_tr, y_tr)
        if not np.isfinite(loss):
            raise PathDivergedError(
                "training loss became non-finite",
                iteration=state.iteration, partial_log=log,
            )
        g = -grad
        delta, state.optimizer_state = optimizer_step(
            cfg.optimizer, state.optimizer_state, grad)
        s = np.abs(delta)
        plan = plan_step(state, cfg, g, s)
        crossed = apply_step(state, cfg, plan)
        log.total_crossings += len(crossed)
        return plan

    try:
        record(state.phase)
        if cfg.init_mode == "from_early_stopping":
            for _ in range(cfg.phase1_max_iterations):
                plan = one_step()
                record("reaching_path")
                step_norm = np.linalg.norm(plan.update[sel.indices])
                if step_norm < cfg.phase1_step_tol:
                    break
        state.phase = "descending"
        for _ in range(cfg.max_iterations):
            prev_t = state.t
            state.t = max(cfg.t_floor, state.t - delta_t)
            for _ in range(cfg.inner_steps):
                one_step()
            record("descending")
            if prev_t == cfg.t_floor and delta_t > 0:
                break
    except TrainingDivergedError as exc:
        if isinstance(exc, PathDivergedError):
            raise
        raise PathDivergedError(
            str(exc), iteration=state.iteration, partial_log=log) from exc

    _annotate(log)
    return log


def _annotate(log):
    from .pathlog import select_min_validation, select_sparsest_within

    try:
        vmin = select_min_validation(log)
    except ValueError:
        return
    log.annotations["val_min_index"] = vmin
    log.annotations["sparse_index"] = select_sparsest_within(log, 0.01)


def planner_overhead_seconds(n_selected, repeats=3, seed=0):
    """Wall time of the allocation alone (no gradients) at a given size."""
    rng = np.random.default_rng(seed)
    w = rng.normal(size=n_selected)
    w[rng.random(n_selected) < 0.2] = 0.0
    g = rng.normal(size=n_selected)
    p = np.ones(n_selected)
    s = np.abs(rng.normal(size=n_selected)) * 1e-2
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        plan_linear_step(w, g, p, s, slack=-1e-3)
        best = min(best, time.perf_counter() - t0)
    return best
