"""Penalty catalog: values and slopes d(penalty)/d|w| over a parameter subset.

The interface is a pair of pure functions keyed by kind, so further penalties
(elastic net, SCAD, MC+) can be added without touching the path driver.
Shipped kinds: l1, l2, and the non-convex logarithmic penalty
log((1-beta)|w| + beta) with beta in (0, 1).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PENALTY_KINDS = ("l1", "l2", "log_beta")


class ConfigError(ValueError):
    """Invalid penalty or selection configuration."""


@dataclass(frozen=True)
class PenaltySpec:
    kind: str
    beta: float = 0.5  # log_beta only

    def __post_init__(self):
        if self.kind not in PENALTY_KINDS:
            raise ConfigError(f"unknown penalty kind {self.kind!r}")
        if self.kind == "log_beta" and not 0.0 < self.beta < 1.0:
            raise ConfigError(f"log_beta requires beta in (0, 1), got {self.beta}")


@dataclass(frozen=True)
class RegularizedSelection:
    """Flat parameter indices included in the constraint.

    Default policy elsewhere: all first-layer weights, biases excluded.
    """

    indices: np.ndarray

    def __post_init__(self):
        idx = np.unique(np.asarray(self.indices, dtype=np.intp))
        if idx.size and idx[0] < 0:
            raise ConfigError("selection indices must be nonnegative")
        object.__setattr__(self, "indices", idx)

    def __len__(self):
        return self.indices.size

    @classmethod
    def first_layer_weights(cls, net_spec):
        return cls(net_spec.first_layer_weight_indices())


def _selected(params, sel):
    values = np.asarray(getattr(params, "values", params), dtype=np.float64)
    if sel.indices.size and sel.indices[-1] >= values.size:
        raise ConfigError("selection index out of range of parameter vector")
    return values[sel.indices]


def _abs_value_terms(spec, absw):
    if spec.kind == "l1":
        return absw
    if spec.kind == "l2":
        return absw * absw
    return np.log((1.0 - spec.beta) * absw + spec.beta)


def penalty_value(spec, params, sel):
    """Penalty summed over the selected indices only.

    For log_beta the value may be negative (log(beta) < 0 at w = 0); only
    differences and slopes matter downstream, so no offset is applied.
    """
    absw = np.abs(_selected(params, sel))
    return float(np.sum(_abs_value_terms(spec, absw)))


def penalty_slope(spec, params, sel):
    """Elementwise d(penalty)/d|w_j| at the current point, over the selection."""
    absw = np.abs(_selected(params, sel))
    if spec.kind == "l1":
        return np.ones_like(absw)
    if spec.kind == "l2":
        return 2.0 * absw
    return (1.0 - spec.beta) / ((1.0 - spec.beta) * absw + spec.beta)
