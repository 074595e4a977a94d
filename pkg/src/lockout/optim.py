"""Unconstrained training loops and per-parameter optimizer steps.

Provides the two starting points for the path driver: the fully converged
solution and the validation-minimum (early stopping) snapshot.  An
"iteration" is one full-batch update unless a mini-batch size is configured,
in which case it is one mini-batch update and the convergence rule applies to
the epoch-mean training loss.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .network import NetworkParams, backward, loss_value

OPTIMIZER_KINDS = ("gradient_descent", "adaptive_moments")


class TrainingDivergedError(RuntimeError):
    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


@dataclass(frozen=True)
class OptimizerKind:
    kind: str = "gradient_descent"
    learning_rate: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.kind not in OPTIMIZER_KINDS:
            raise ValueError(f"unknown optimizer kind {self.kind!r}")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("moment decay rates must lie in (0, 1)")


@dataclass
class OptimizerState:
    m: np.ndarray = None
    v: np.ndarray = None
    step: int = 0


@dataclass(frozen=True)
class ConvergenceRule:
    tolerance: float = 1e-5
    patience: int = 20
    max_iterations: int = 100_000

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")


@dataclass
class TrainResult:
    params: np.ndarray
    iterations: int
    train_losses: np.ndarray
    val_losses: np.ndarray
    best_val_index: int
    best_val_params: np.ndarray
    stop_reason: str


def optimizer_step(kind, state, grad):
    """Proposed parameter delta for one update; returns (delta, new state)."""
    grad = np.asarray(grad, dtype=np.float64)
    if not np.all(np.isfinite(grad)):
        raise TrainingDivergedError("non-finite gradient")
    if kind.kind == "gradient_descent":
        return -kind.learning_rate * grad, state
    if state is None or state.m is None:
        state = OptimizerState(np.zeros_like(grad), np.zeros_like(grad), 0)
    m = kind.beta1 * state.m + (1 - kind.beta1) * grad
    v = kind.beta2 * state.v + (1 - kind.beta2) * grad * grad
    t = state.step + 1
    m_hat = m / (1 - kind.beta1**t)
    v_hat = v / (1 - kind.beta2**t)
    delta = -kind.learning_rate * m_hat / (np.sqrt(v_hat) + kind.eps)
    return delta, OptimizerState(m, v, t)


def _splits(data):
    X_tr, y_tr = data.subset("train")
    try:
        X_va, y_va = data.subset("validation")
    except KeyError:
        X_va, y_va = None, None
    return X_tr, y_tr, X_va, y_va


def _batches(n_rows, batch_size, rng):
    if batch_size is None or batch_size >= n_rows:
        yield slice(None)
        return
    order = rng.permutation(n_rows)
    for start in range(0, n_rows, batch_size):
        yield order[start : start + batch_size]


def _train_loop(spec, init_params, data, kind, max_iterations, stop_check,
                batch_size=None, seed=0):
    values = np.array(np.asarray(getattr(init_params, "values", init_params)),
                      dtype=np.float64)
    X_tr, y_tr, X_va, y_va = _splits(data)
    rng = np.random.default_rng(seed)
    state = None
    train_losses, val_losses = [], []
    best_val = np.inf
    best_index = -1
    best_params = values.copy()
    prev_loss = loss_value(spec, values, X_tr, y_tr)
    streak = 0
    stop_reason = "max_iterations"
    it = 0
    while it < max_iterations:
        if batch_size is None:
            loss, grad = backward(spec, values, X_tr, y_tr)
            delta, state = optimizer_step(kind, state, grad)
            values = values + delta
            epoch_loss = loss_value(spec, values, X_tr, y_tr)
        else:
            for rows in _batches(X_tr.shape[0], batch_size, rng):
                _, grad = backward(spec, values, X_tr[rows], y_tr[rows])
                delta, state = optimizer_step(kind, state, grad)
                values = values + delta
            epoch_loss = loss_value(spec, values, X_tr, y_tr)
        it += 1
        if not np.isfinite(epoch_loss):
            raise TrainingDivergedError(
                f"training loss became non-finite at iteration {it}",
                iteration=it,
            )
        train_losses.append(epoch_loss)
        if X_va is not None:
            v = loss_value(spec, values, X_va, y_va)
            val_losses.append(v)
            if v < best_val:  # strict: earliest iteration wins ties
                best_val = v
                best_index = it - 1
                best_params = values.copy()
        if abs(epoch_loss - prev_loss) < stop_check[0]:
            streak += 1
        else:
            streak = 0
        prev_loss = epoch_loss
        if stop_check[1] is not None and streak >= stop_check[1]:
            stop_reason = "converged"
            break
    if best_index < 0:
        best_params = values.copy()
    return TrainResult(
        params=values,
        iterations=it,
        train_losses=np.asarray(train_losses),
        val_losses=np.asarray(val_losses),
        best_val_index=best_index,
        best_val_params=best_params,
        stop_reason=stop_reason,
    )


def train_to_convergence(spec, init_params, data, kind, rule,
                         batch_size=None, seed=0):
    """Train until the loss change stays below tolerance for `patience`
    consecutive iterations, or until max_iterations."""
    return _train_loop(
        spec, init_params, data, kind, rule.max_iterations,
        (rule.tolerance, rule.patience), batch_size=batch_size, seed=seed,
    )


def train_with_early_stopping(spec, init_params, data, kind, max_iterations,
                              batch_size=None, seed=0):
    """Train for max_iterations and snapshot the validation-loss minimum
    (earliest iteration on ties)."""
    X_tr, y_tr, X_va, y_va = _splits(data)
    if X_va is None:
        raise ValueError("early stopping requires a validation split")
    return _train_loop(
        spec, init_params, data, kind, max_iterations,
        (0.0, None), batch_size=batch_size, seed=seed,
    )
