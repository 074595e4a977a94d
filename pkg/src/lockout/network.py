"""Dense feed-forward networks: evaluation, exact reverse-mode gradients, metrics.

Everything here is pure and operates on 64-bit numpy arrays.  Parameters are
stored as a single flat vector; the layout (per-layer weight blocks followed by
an optional bias block) is derived from the architecture description.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("linear", "relu", "tanh", "sigmoid")
LOSSES = ("mean_squared_error", "cross_entropy")


class ShapeError(ValueError):
    """Input dimensions do not match the network architecture."""


class NumericError(FloatingPointError):
    """Non-finite values encountered during evaluation."""

    def __init__(self, message, layer=None):
        super().__init__(message)
        self.layer = layer


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture of a dense feed-forward stack.

    layer_sizes: input width first, output width last (at least two entries).
    activations: one activation name per non-input layer.
    loss: "mean_squared_error" (real targets) or "cross_entropy" (class
        indices, requires output width >= 2; outputs are logits).
    biases: per non-input layer, whether a bias vector exists (default: all).
    """

    layer_sizes: tuple
    activations: tuple
    loss: str = "mean_squared_error"
    biases: tuple = None

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        acts = tuple(self.activations)
        object.__setattr__(self, "layer_sizes", sizes)
        object.__setattr__(self, "activations", acts)
        if len(sizes) < 2:
            raise ShapeError("need at least an input and an output layer")
        if any(s <= 0 for s in sizes):
            raise ShapeError(f"layer sizes must be positive, got {sizes}")
        if len(acts) != len(sizes) - 1:
            raise ShapeError(
                f"expected {len(sizes) - 1} activations, got {len(acts)}"
            )
        for a in acts:
            if a not in ACTIVATIONS:
                raise ShapeError(f"unknown activation {a!r}")
        if self.loss not in LOSSES:
            raise ShapeError(f"unknown loss {self.loss!r}")
        if self.loss == "cross_entropy" and sizes[-1] < 2:
            raise ShapeError("cross_entropy requires output width >= 2")
        if self.biases is None:
            object.__setattr__(self, "biases", (True,) * (len(sizes) - 1))
        else:
            b = tuple(bool(x) for x in self.biases)
            if len(b) != len(sizes) - 1:
                raise ShapeError("biases flags must match layer count")
            object.__setattr__(self, "biases", b)

    @property
    def n_layers(self):
        return len(self.layer_sizes) - 1

    @property
    def input_width(self):
        return self.layer_sizes[0]

    @property
    def output_width(self):
        return self.layer_sizes[-1]

    # ---- flat parameter layout -------------------------------------------
    def layer_offsets(self):
        """(weight_start, bias_start, end) per layer in the flat vector."""
        offsets = []
        pos = 0
        for l in range(self.n_layers):
            n_in = self.layer_sizes[l]
            n_out = self.layer_sizes[l + 1]
            w_start = pos
            pos += n_out * n_in
            b_start = pos
            if self.biases[l]:
                pos += n_out
            offsets.append((w_start, b_start, pos))
        return offsets

    @property
    def n_params(self):
        return self.layer_offsets()[-1][2]

    def weight_index(self, layer, dst, src):
        """Flat index of the weight from source unit to destination unit."""
        w_start, _, _ = self.layer_offsets()[layer]
        n_in = self.layer_sizes[layer]
        if not (0 <= dst < self.layer_sizes[layer + 1] and 0 <= src < n_in):
            raise ShapeError(f"weight ({layer},{dst},{src}) out of range")
        return w_start + dst * n_in + src

    def bias_index(self, layer, dst):
        if not self.biases[layer]:
            raise ShapeError(f"layer {layer} has no bias")
        _, b_start, _ = self.layer_offsets()[layer]
        if not 0 <= dst < self.layer_sizes[layer + 1]:
            raise ShapeError(f"bias ({layer},{dst}) out of range")
        return b_start + dst

    def layer_weights(self, values, layer):
        """View of one layer's weight matrix, shape (n_out, n_in)."""
        w_start, b_start, _ = self.layer_offsets()[layer]
        n_in = self.layer_sizes[layer]
        n_out = self.layer_sizes[layer + 1]
        return values[w_start:b_start].reshape(n_out, n_in)

    def layer_bias(self, values, layer):
        _, b_start, end = self.layer_offsets()[layer]
        if not self.biases[layer]:
            return None
        return values[b_start:end]

    def first_layer_weight_indices(self):
        """Flat indices of the input-side weight matrix (biases excluded)."""
        w_start, b_start, _ = self.layer_offsets()[0]
        return np.arange(w_start, b_start)


@dataclass
class NetworkParams:
    """Flat 64-bit parameter store bound to an architecture."""

    spec: NetworkSpec
    values: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.values is None:
            self.values = np.zeros(self.spec.n_params)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.spec.n_params,):
            raise ShapeError(
                f"expected {self.spec.n_params} parameters, "
                f"got shape {self.values.shape}"
            )

    @classmethod
    def init_random(cls, spec, seed=0):
        """Uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)] per layer."""
        rng = np.random.default_rng(seed)
        values = np.empty(spec.n_params)
        for l, (w_start, b_start, end) in enumerate(spec.layer_offsets()):
            bound = 1.0 / np.sqrt(spec.layer_sizes[l])
            values[w_start:end] = rng.uniform(-bound, bound, end - w_start)
        return cls(spec, values)


def _param_values(params):
    values = params.values if isinstance(params, NetworkParams) else params
    return np.asarray(values, dtype=np.float64)


def _activate(name, z):
    if name == "linear":
        return z
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    if name == "sigmoid":
        return 1.0 / (1.0 + np.exp(-z))
    raise ShapeError(f"unknown activation {name!r}")


def _activate_deriv(name, z, a):
    # Derivative at pre-activation z; a is the activation output.
    if name == "linear":
        return np.ones_like(z)
    if name == "relu":
        # Subgradient 0 at exactly z == 0 (keeps dead units dead).
        return (z > 0).astype(np.float64)
    if name == "tanh":
        return 1.0 - a * a
    if name == "sigmoid":
        return a * (1.0 - a)
    raise ShapeError(f"unknown activation {name!r}")


def _forward_pass(spec, values, X, check=False):
    """Returns (pre-activations, activations); activations[0] is X."""
    a = np.asarray(X, dtype=np.float64)
    if a.ndim == 1:
        a = a.reshape(1, -1)
    if a.shape[1] != spec.input_width:
        raise ShapeError(
            f"expected {spec.input_width} input columns, got {a.shape[1]}"
        )
    zs, acts = [], [a]
    for l in range(spec.n_layers):
        W = spec.layer_weights(values, l)
        z = acts[-1] @ W.T
        b = spec.layer_bias(values, l)
        if b is not None:
            z = z + b
        if check and not np.all(np.isfinite(z)):
            raise NumericError(f"non-finite values in layer {l}", layer=l)
        a = _activate(spec.activations[l], z)
        zs.append(z)
        acts.append(a)
    return zs, acts


def forward(spec, params, X):
    """Evaluate the network on a feature matrix; one output row per input row."""
    values = _param_values(params)
    _, acts = _forward_pass(spec, values, X)
    return acts[-1]


def _loss_and_output_grad(spec, pred, y):
    n = pred.shape[0]
    if spec.loss == "mean_squared_error":
        Y = np.asarray(y, dtype=np.float64)
        if Y.ndim == 1:
            Y = Y.reshape(-1, 1)
        if Y.shape != pred.shape:
            raise ShapeError(f"target shape {Y.shape} vs prediction {pred.shape}")
        diff = pred - Y
        loss = float(np.mean(diff * diff))
        dpred = 2.0 * diff / diff.size
        return loss, dpred
    # cross_entropy over logits, stable log-sum-exp
    yi = np.asarray(y)
    if yi.ndim != 1 or yi.shape[0] != n:
        raise ShapeError("class targets must be a vector matching rows")
    yi = yi.astype(np.intp)
    if yi.min() < 0 or yi.max() >= spec.output_width:
        raise ShapeError("class target out of range of output width")
    zmax = pred.max(axis=1, keepdims=True)
    expz = np.exp(pred - zmax)
    lse = np.log(expz.sum(axis=1)) + zmax[:, 0]
    loss = float(np.mean(lse - pred[np.arange(n), yi]))
    softmax = expz / expz.sum(axis=1, keepdims=True)
    dpred = softmax
    dpred[np.arange(n), yi] -= 1.0
    dpred /= n
    return loss, dpred


def loss_value(spec, params, X, y):
    """Mean loss over rows (no gradient)."""
    pred = forward(spec, params, X)
    loss, _ = _loss_and_output_grad(spec, pred, y)
    return loss


def backward(spec, params, X, y):
    """Mean loss and its exact gradient d(loss)/d(params), both full batch."""
    values = _param_values(params)
    zs, acts = _forward_pass(spec, values, X, check=True)
    loss, dA = _loss_and_output_grad(spec, acts[-1], np.asarray(y))
    grad = np.zeros_like(values)
    for l in range(spec.n_layers - 1, -1, -1):
        dZ = dA * _activate_deriv(spec.activations[l], zs[l], acts[l + 1])
        w_start, b_start, end = spec.layer_offsets()[l]
        n_in = spec.layer_sizes[l]
        n_out = spec.layer_sizes[l + 1]
        grad[w_start:b_start] = (dZ.T @ acts[l]).reshape(n_out * n_in)
        if spec.biases[l]:
            grad[b_start:end] = dZ.sum(axis=0)
        if l > 0:
            dA = dZ @ spec.layer_weights(values, l)
    return loss, grad


def relative_rmse(predictions, targets):
    """sqrt(sum((y - yhat)^2) / sum((y - mean(y))^2)), i.e. sqrt(1 - R^2)."""
    yhat = np.asarray(predictions, dtype=np.float64).reshape(-1)
    y = np.asarray(targets, dtype=np.float64).reshape(-1)
    if yhat.shape != y.shape:
        raise ShapeError("predictions and targets must have equal length")
    if y.size < 2:
        raise ShapeError("need at least two targets")
    denom = np.sum((y - y.mean()) ** 2)
    if denom == 0.0:
        raise ValueError("targets are constant; relative RMSE is undefined")
    return float(np.sqrt(np.sum((y - yhat) ** 2) / denom))


def error_rate(predictions, class_targets):
    """Misclassification fraction via row argmax (ties: lowest index)."""
    pred = np.asarray(predictions, dtype=np.float64)
    y = np.asarray(class_targets).reshape(-1)
    if pred.ndim != 2 or pred.shape[0] != y.shape[0]:
        raise ShapeError("predictions must be (rows, classes) matching targets")
    if y.size == 0:
        raise ValueError("empty input")
    picked = pred.argmax(axis=1)
    return float(np.mean(picked != y))
