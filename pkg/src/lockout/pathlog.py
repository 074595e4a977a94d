"""Path recording, model selection along the path, feature importance, export."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

CSV_HEADER = "iteration,phase,t,train_loss,val_loss,nonzero_count"


@dataclass
class PathPoint:
    iteration: int
    phase: str  # "reaching_path" or "descending"
    t: float
    train_loss: float
    val_loss: float  # nan when not evaluated this iteration
    nonzero_count: int
    snapshot: np.ndarray = None


@dataclass
class PathLog:
    points: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    annotations: dict = field(default_factory=dict)
    total_crossings: int = 0

    def append(self, point):
        if self.points and point.iteration <= self.points[-1].iteration:
            raise ValueError("iterations must be strictly increasing")
        self.points.append(point)

    def __len__(self):
        return len(self.points)


def _val_losses(log):
    if not log.points:
        raise ValueError("empty path log")
    v = np.array([p.val_loss for p in log.points])
    if not np.isfinite(v).any():
        raise ValueError("path log has no validation losses")
    return v


def select_min_validation(log):
    """Index of the validation-loss minimum.

    Ties break to the smallest nonzero count, then the latest iteration.
    """
    v = _val_losses(log)
    vmin = np.nanmin(v)
    best = None
    for i, p in enumerate(log.points):
        if not np.isfinite(p.val_loss) or p.val_loss != vmin:
            continue
        key = (p.nonzero_count, -p.iteration)
        if best is None or key < best[0]:
            best = (key, i)
    return best[1]


def select_sparsest_within(log, tolerance):
    """Sparsest point whose validation loss is within (1 + tolerance) of the
    minimum; ties break to the latest iteration."""
    if tolerance < 0:
        raise ValueError("tolerance must be nonnegative")
    v = _val_losses(log)
    cutoff = (1.0 + tolerance) * np.nanmin(v)
    best = None
    for i, p in enumerate(log.points):
        if not np.isfinite(p.val_loss) or p.val_loss > cutoff:
            continue
        key = (p.nonzero_count, -p.iteration)
        if best is None or key < best[0]:
            best = (key, i)
    return best[1]


def feature_importance(spec, params, mode="multi_node"):
    """Per-input-feature importance from the first-layer weights.

    single_node: |w_i| for the single first-layer node.
    multi_node: per-feature sum of |w| over nodes, scaled so the maximum
    feature scores 1 (all zeros stay zero).
    """
    values = np.asarray(getattr(params, "values", params), dtype=np.float64)
    W1 = spec.layer_weights(values, 0)
    if mode == "single_node":
        if W1.shape[0] != 1:
            raise ValueError("single_node mode requires a one-node first layer")
        return np.abs(W1[0]).copy()
    if mode != "multi_node":
        raise ValueError(f"unknown importance mode {mode!r}")
    omega = np.abs(W1).sum(axis=0)
    top = omega.max()
    return omega / top if top > 0 else omega


def _point_dict(p):
    d = {
        "iteration": int(p.iteration),
        "phase": p.phase,
        "t": float(p.t),
        "train_loss": float(p.train_loss),
        "val_loss": None if not np.isfinite(p.val_loss) else float(p.val_loss),
        "nonzero_count": int(p.nonzero_count),
    }
    if p.snapshot is not None:
        d["snapshot"] = [float(x) for x in p.snapshot]
    return d


def export_log(log, path, format="csv"):
    """Write the log as CSV (fixed column set) or JSON (lossless round trip)."""
    path = str(path)
    if format == "csv":
        lines = [CSV_HEADER]
        for p in log.points:
            val = "" if not np.isfinite(p.val_loss) else format_float(p.val_loss)
            lines.append(
                f"{p.iteration},{p.phase},{format_float(p.t)},"
                f"{format_float(p.train_loss)},{val},{p.nonzero_count}"
            )
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
    elif format == "json":
        doc = {
            "config": log.config,
            "annotations": log.annotations,
            "total_crossings": log.total_crossings,
            "points": [_point_dict(p) for p in log.points],
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=1)
    else:
        raise ValueError(f"unknown export format {format!r}")


def format_float(x):
    return repr(float(x))


def load_log(path):
    """Read back a JSON export."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    log = PathLog(
        config=doc.get("config", {}),
        annotations=doc.get("annotations", {}),
        total_crossings=doc.get("total_crossings", 0),
    )
    for d in doc["points"]:
        snap = d.get("snapshot")
        log.append(PathPoint(
            iteration=d["iteration"],
            phase=d["phase"],
            t=d["t"],
            train_loss=d["train_loss"],
            val_loss=np.nan if d["val_loss"] is None else d["val_loss"],
            nonzero_count=d["nonzero_count"],
            snapshot=None if snap is None else np.asarray(snap, dtype=np.float64),
        ))
    return log
