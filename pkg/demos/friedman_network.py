#!/usr/bin/env python3
# Sparse feature selection through a nonlinear network.  The target is a
# four-variable interaction function buried in 200 candidate features at
# SNR 0.5, so a linear model cannot represent it.  We fit a 2x10 relu
# network, start the budget descent from the early-stopping point, and
# constrain only the first-layer weights: a feature is "in" if any of
# its outgoing weights survive.
#
# One practical wrinkle: on a relu net a hard budget squeeze can kill
# every hidden unit at once, and a dead net has zero gradient, so the
# descent stalls.  When that happens we keep the surviving first-layer
# weights (the feature selection learned so far) and reinitialize the
# rest of the net from a fresh random draw, letting it relearn from the
# selected features.  A lasso on the same data is the linear baseline.

import numpy as np

from lockout import (
    LockoutConfig, NetworkParams, NetworkSpec, OptimizerKind, PenaltySpec,
    RegularizedSelection, forward, gen_friedman, lasso_path_oracle,
    relative_rmse, run_path, train_with_early_stopping, zscore_by_train,
)

seed = 0
raw = gen_friedman(n=1000, p=200, include_linear_terms=False, seed=seed,
                   snr=0.5)
ds = zscore_by_train(raw)
X_tr, y_tr = ds.subset("train")
X_te, y_te = ds.subset("test")

spec = NetworkSpec((200, 10, 10, 1), ("relu", "relu", "linear"))
init = NetworkParams.init_random(spec, seed=seed)
es = train_with_early_stopping(spec, init, ds,
                               OptimizerKind("adaptive_moments", 1e-3), 3000)
start = es.best_val_params
rr0 = relative_rmse(forward(spec, start, X_te).ravel(), y_te)
print(f"early stopping: test relative rmse {rr0:.3f}, all 200 features in")

sel = RegularizedSelection.first_layer_weights(spec)
mask = np.zeros(spec.n_params, dtype=bool)
mask[sel.indices] = True


def n_features(params):
    W1 = spec.layer_weights(params, 0)
    return int((np.abs(W1).sum(axis=0) > 0).sum())


best_rr, best_nf = np.inf, None
rng = np.random.default_rng(seed + 1000)
current = start
t_now = np.abs(current[sel.indices]).sum()
stalls = 0
for stage in range(1, 61):
    # shave 30% off the budget per stage, 55 points, 20 planner steps each
    cfg = LockoutConfig(PenaltySpec("l1"), sel,
                        OptimizerKind("gradient_descent", 0.02),
                        delta_t=t_now * 0.3 / 50, max_iterations=55,
                        inner_steps=20, snapshot_stride=1)
    log = run_path(spec, current, ds, cfg)
    for pt in log.points:
        nf = n_features(pt.snapshot)
        if 0 < nf <= 10:
            rr = relative_rmse(forward(spec, pt.snapshot, X_te).ravel(), y_te)
            if rr < best_rr:
                best_rr, best_nf = rr, nf
    current = log.points[-1].snapshot
    t_new = np.abs(current[sel.indices]).sum()
    nf = n_features(current)
    rr = relative_rmse(forward(spec, current, X_te).ravel(), y_te)
    print(f"stage {stage:2d}: budget {t_now:7.2f} -> {t_new:7.2f}   "
          f"features {nf:3d}   test rr {rr:.3f}")
    if t_new >= t_now * 0.95:  # stalled, usually a fully dead net
        stalls += 1
        if stalls > 3:
            break
        fresh = NetworkParams.init_random(spec,
                                          seed=int(rng.integers(2**31))).values
        current = current.copy()
        current[~mask] = fresh[~mask]
        print("          net went dead, reinitialized the non-selected "
              "parameters")
    else:
        stalls = 0
    t_now = max(t_new, 1e-6)
    if t_now < 1e-3 or (nf <= 3 and rr < 1):
        break

print(f"\nbest network with <= 10 features: test relative rmse "
      f"{best_rr:.3f} at {best_nf} features")

# linear baseline: lasso path over the sparse end of its budget range
w_ols, *_ = np.linalg.lstsq(X_tr, y_tr, rcond=None)
grid = np.linspace(0.01, 0.08, 10) * np.abs(w_ols).sum()
best_la = np.inf
for w in lasso_path_oracle(X_tr, y_tr, grid):
    if 0 < np.count_nonzero(w) <= 10:
        best_la = min(best_la, relative_rmse(X_te @ w, y_te))
print(f"best lasso with <= 10 features:   test relative rmse {best_la:.3f}")
