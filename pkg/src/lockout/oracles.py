"""Independent verification engines.

Deliberately slow, simple, and sharing no arithmetic helpers with the step
planner: an exact small-scale solver for the per-step linearized problem, a
coordinate-descent lasso for linear-model path comparison, and central-
difference gradients.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import loss_value


class OracleError(RuntimeError):
    pass


@dataclass
class LinStepInstance:
    """One linearized step problem over a small constrained subset."""

    w: np.ndarray
    g: np.ndarray
    p: np.ndarray
    s: np.ndarray
    slack: float

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=np.float64)
        self.g = np.asarray(self.g, dtype=np.float64)
        self.p = np.asarray(self.p, dtype=np.float64)
        self.s = np.asarray(self.s, dtype=np.float64)
        if np.any(self.p < 0) or np.any(self.s < 0):
            raise ValueError("slopes and step radii must be nonnegative")


def lp_step_oracle(inst):
    """Exact maximizer of sum(g * dw) subject to the linearized penalty
    budget and the per-parameter box |dw| <= s.

    Strategy: parameters with zero slope move freely; nonzero parameters
    whose objective-improving direction shrinks them move fully and enlarge
    the budget; the rest is a continuous knapsack solved by enumerating the
    grow/shrink split point in benefit-to-cost order.  Returns (dw, objective).
    """
    w, g, p, s, slack = inst.w, inst.g, inst.p, inst.s, float(inst.slack)
    n = w.size
    dw = np.zeros(n)
    free = p == 0.0
    dw[free] = np.sign(g[free]) * s[free]
    gain = (~free) & (w != 0.0) & (np.sign(w) != np.sign(g))
    dw[gain] = np.sign(g[gain]) * s[gain]
    budget = slack + float(np.sum(p[gain] * s[gain]))
    rest = np.flatnonzero(~free & ~gain)
    if rest.size:
        gamma = np.abs(g[rest]) / p[rest]
        order = rest[np.lexsort((rest, -gamma))]
        gam = np.abs(g[order]) / p[order]
        cap = p[order] * s[order]
        nz = w[order] != 0.0
        m = _knapsack_m(gam, cap, nz, budget)
        dw[order] = np.sign(g[order]) * m / p[order]
    return dw, float(np.sum(g * dw))


def _knapsack_m(gam, cap, nz, budget):
    """Allocation in the change-of-variables space (m = p * |dw| signed by
    whether the move grows or shrinks the penalty)."""
    k_total = gam.size
    if budget + cap[nz].sum() < 0.0:
        # Budget cannot be met even with every nonzero parameter shrinking
        # fully: saturate the shrink, zeros stay put.
        return np.where(nz, -cap, 0.0)
    best_obj, best_m = -np.inf, np.zeros(k_total)
    for split in range(k_total + 1):
        m = np.zeros(k_total)
        shrink_cap = cap[split:][nz[split:]].sum()
        remaining = budget + shrink_cap
        for i in range(split):
            if remaining <= 0.0:
                break
            m[i] = min(cap[i], remaining)
            remaining -= m[i]
        need = m[:split].sum() - budget
        j = k_total - 1
        while need > 0.0 and j >= split:
            if nz[j]:
                take = min(cap[j], need)
                m[j] = -take
                need -= take
            j -= 1
        if need > 1e-12 * max(1.0, abs(budget)):
            continue  # this split cannot satisfy the budget
        obj = float(np.sum(gam * m))
        if obj > best_obj:
            best_obj, best_m = obj, m
    return best_m


def grid_search_step(inst, points=21, rounds=6):
    """Brute-force cross-check for <= 3 parameters.

    Evaluates a multi-resolution grid over the box plus every candidate
    vertex of the feasible polytope (each coordinate at a box bound, at the
    kink dw = 0, or pinned by budget equality).  The objective and the
    budget are linear within each orthant, so the optimum sits on one of
    those vertices and the search is exact up to round-off.
    """
    w, g, p, s, slack = inst.w, inst.g, inst.p, inst.s, float(inst.slack)
    n = w.size
    if n > 3:
        raise OracleError("grid search is limited to 3 parameters")
    zero = w == 0.0
    feas_tol = 1e-9 * max(1.0, np.abs(slack))

    def used(pts):
        return (np.abs(pts[:, zero]) @ p[zero]
                + (pts[:, ~zero] * (p * np.sign(w))[~zero]).sum(axis=1))

    candidates = []
    from itertools import product
    corners = list(product(*[(-s[i], 0.0, s[i]) for i in range(n)]))
    for corner in corners:
        candidates.append(np.array(corner))
        for j in range(n):
            if p[j] == 0.0:
                continue
            others = np.array(corner)
            others[j] = 0.0
            rest = used(others[None, :])[0]
            room = slack - rest
            if zero[j]:
                mag = room / p[j]
                if 0.0 <= mag <= s[j]:
                    for sign in (-1.0, 1.0):
                        v = others.copy()
                        v[j] = sign * mag
                        candidates.append(v)
            else:
                v = others.copy()
                v[j] = room / (p[j] * np.sign(w[j]))
                if abs(v[j]) <= s[j]:
                    candidates.append(v)
    lo = -s.copy()
    hi = s.copy()
    best = None
    for _ in range(rounds):
        axes = [np.linspace(lo[i], hi[i], points) for i in range(n)]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
        if candidates:
            mesh = np.vstack([mesh, np.array(candidates)])
            candidates = []
        feasible = used(mesh) <= slack + feas_tol
        if not feasible.any():
            # Entire window infeasible: fall back to the saturation point.
            sat = np.where(w != 0.0, -np.sign(w) * s, 0.0)
            return sat, float(np.sum(g * sat))
        objs = mesh @ g
        objs[~feasible] = -np.inf
        k = int(np.argmax(objs))
        center = mesh[k]
        if best is None or objs[k] > best[1]:
            best = (center, float(objs[k]))
        width = (hi - lo) / (points - 1)
        lo = np.maximum(-s, center - width)
        hi = np.minimum(s, center + width)
    return best


def lasso_path_oracle(X, y, t_grid, tol=1e-8, max_iter=100_000):
    """Budget-constrained lasso solutions for a linear model (no intercept).

    Coordinate descent on the penalized form (1/2n)||y - Xw||^2 + lam*||w||_1
    with a bisection over lam to hit sum|w| = t for each requested t.
    Returns an array of weight vectors, one per t.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    n, d = X.shape
    col_sq = (X * X).sum(axis=0) / n
    if np.any(col_sq == 0):
        raise OracleError("zero-variance feature column")
    w_ols, *_ = np.linalg.lstsq(X, y, rcond=None)
    t_ols = np.abs(w_ols).sum()
    lam_max = np.max(np.abs(X.T @ y)) / n

    def sweep(lam, w, r, idx):
        delta = 0.0
        for j in idx:
            wj = w[j]
            if wj != 0.0:
                r += wj * X[:, j]
            rho = (X[:, j] @ r) / n
            w[j] = np.sign(rho) * max(abs(rho) - lam, 0.0) / col_sq[j]
            if w[j] != 0.0:
                r -= w[j] * X[:, j]
            delta = max(delta, abs(w[j] - wj))
        return delta

    def solve(lam, w0):
        # Full sweeps establish the active set; cheap sweeps over only the
        # nonzero features do the bulk of the convergence work.
        w = w0.copy()
        r = y - X @ w
        everything = range(d)
        budget = max_iter
        while budget > 0:
            full_delta = sweep(lam, w, r, everything)
            budget -= 1
            if full_delta < tol:
                return w
            active = np.flatnonzero(w)
            while budget > 0:
                budget -= 1
                if sweep(lam, w, r, active) < tol:
                    break
        raise OracleError(f"coordinate descent did not converge at lam={lam}")

    out = []
    warm = np.zeros(d)
    for t in t_grid:
        t = float(t)
        if t <= 0.0:
            out.append(np.zeros(d))
            continue
        if t >= t_ols:
            out.append(w_ols.copy())
            continue
        lo_lam, hi_lam = 0.0, lam_max
        w = warm
        for _ in range(100):
            mid = 0.5 * (lo_lam + hi_lam)
            w = solve(mid, w)
            total = np.abs(w).sum()
            if total > t:
                lo_lam = mid
            else:
                hi_lam = mid
            if (abs(total - t) <= 1e-8 * max(1.0, t)
                    or hi_lam - lo_lam <= 1e-12 * lam_max):
                break
        w = solve(hi_lam, w)
        out.append(w.copy())
        warm = w
    return np.asarray(out)


def finite_diff_gradient(spec, params, X, y, h=1e-6):
    """Central differences of the mean loss per parameter."""
    if h <= 0:
        raise ValueError("h must be positive")
    values = np.array(
        np.asarray(getattr(params, "values", params)), dtype=np.float64)
    grad = np.zeros_like(values)
    for j in range(values.size):
        orig = values[j]
        values[j] = orig + h
        up = loss_value(spec, values, X, y)
        values[j] = orig - h
        down = loss_value(spec, values, X, y)
        values[j] = orig
        grad[j] = (up - down) / (2.0 * h)
    return grad
