#!/usr/bin/env python3
# Single-node regression with 100 candidate features, only 3 of them real.
# We train the unconstrained model to convergence, then walk the budget
# down and watch features get locked out one by one.  The validation
# minimum of the path lands on a much sparser and more accurate model
# than plain early stopping.

import numpy as np

from lockout import (
    ConvergenceRule, LockoutConfig, NetworkParams, NetworkSpec,
    OptimizerKind, PenaltySpec, RegularizedSelection, feature_importance,
    forward, gen_synthetic_one_node, relative_rmse, run_path,
    train_to_convergence, train_with_early_stopping,
)

seed = 0
ds = gen_synthetic_one_node(n=500, p=100, activation="linear", seed=seed,
                            snr=1.0)
X_te, y_te = ds.subset("test")  # the test targets are noiseless
spec = NetworkSpec((100, 1), ("linear",), biases=(False,))
init = NetworkParams.init_random(spec, seed=seed)

# baseline: stop at the validation minimum of an unconstrained run
es = train_with_early_stopping(spec, init, ds,
                               OptimizerKind("gradient_descent", 5e-3), 20000)
es_rr = relative_rmse(forward(spec, es.best_val_params, X_te).ravel(), y_te)
print(f"early stopping: test relative rmse {es_rr:.3f}, "
      f"{np.count_nonzero(es.best_val_params)} nonzero weights")

# anchor of the path: the fully converged (overfit) solution
conv = train_to_convergence(spec, init, ds,
                            OptimizerKind("gradient_descent", 5e-3),
                            ConvergenceRule(1e-5, 20, 20000))
t_star = np.abs(conv.params).sum()
print(f"converged unconstrained solution: l1 norm {t_star:.2f}")

# walk the budget from t_star down to 0, 40 planner steps per decrement
cfg = LockoutConfig(PenaltySpec("l1"),
                    RegularizedSelection.first_layer_weights(spec),
                    OptimizerKind("gradient_descent", 1e-2),
                    delta_t=t_star / 300, max_iterations=1500,
                    inner_steps=40, snapshot_stride=1)
log = run_path(spec, conv.params, ds, cfg)

print(f"\npath: {len(log.points)} points, {log.total_crossings} zero "
      f"crossings\n")
print("  point        t   nonzero   val loss")
for k in range(0, len(log.points), 150):
    pt = log.points[k]
    print(f"  {pt.iteration:5d} {pt.t:8.3f}   {pt.nonzero_count:7d}"
          f"   {pt.val_loss:8.4f}")

i = log.annotations["val_min_index"]
best = log.points[i]
snap = best.snapshot
lo_rr = relative_rmse(forward(spec, snap, X_te).ravel(), y_te)
print(f"\nvalidation minimum at t={best.t:.3f}: {best.nonzero_count} nonzero "
      f"weights, test relative rmse {lo_rr:.3f} (early stopping {es_rr:.3f})")

imp = feature_importance(spec, snap, mode="single_node")
top = np.argsort(-imp)[:8]
print("top features by |w|:", ", ".join(
    f"x{j}={imp[j]:.2f}" for j in top if imp[j] > 0))
print("the generating features are x0, x1, x2")
