"""Synthetic generators, noise injection, CSV ingestion, and splits."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .penalties import ConfigError

SPLIT_NAMES = ("train", "validation", "test")

# Coefficients of the three-feature single-node target z = a1*x1 - a2*x2 + a3*x3.
ONE_NODE_COEFFS = (0.5, 0.75, 1.0)


class FormatError(ValueError):
    """Malformed input file."""


@dataclass
class Dataset:
    """Row-major feature matrix, targets, per-row split tags, provenance."""

    X: np.ndarray
    y: np.ndarray
    split: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.split = np.asarray(self.split)
        if not np.all(np.isfinite(self.X)):
            raise ValueError("feature matrix must be finite")
        if self.X.shape[0] != self.y.shape[0] or self.X.shape[0] != self.split.shape[0]:
            raise ValueError("X, y, and split tags must have equal row counts")

    @property
    def n_rows(self):
        return self.X.shape[0]

    @property
    def n_features(self):
        return self.X.shape[1]

    def subset(self, name):
        if name not in SPLIT_NAMES:
            raise KeyError(f"unknown split {name!r}")
        mask = self.split == name
        if not mask.any():
            raise KeyError(f"split {name!r} is empty")
        return self.X[mask], self.y[mask]


def _activation_fn(name):
    table = {
        "linear": lambda z: z,
        "relu": lambda z: np.maximum(z, 0.0),
        "tanh": np.tanh,
        "sigmoid": lambda z: 1.0 / (1.0 + np.exp(-z)),
    }
    if name not in table:
        raise ConfigError(f"unknown activation {name!r}")
    return table[name]


def one_node_signal(X, activation="linear"):
    """Noiseless single-node target: g(0.5*x1 - 0.75*x2 + 1.0*x3)."""
    X = np.asarray(X, dtype=np.float64)
    a1, a2, a3 = ONE_NODE_COEFFS
    z = a1 * X[:, 0] - a2 * X[:, 1] + a3 * X[:, 2]
    return _activation_fn(activation)(z)


def friedman_signal(X, include_linear_terms=True):
    """Friedman benchmark target; the two trailing linear terms are optional."""
    X = np.asarray(X, dtype=np.float64)
    y = 10.0 * np.sin(np.pi * X[:, 0] * X[:, 1]) + 20.0 * (X[:, 2] - 0.5) ** 2
    if include_linear_terms:
        y = y + 10.0 * X[:, 3] + 5.0 * X[:, 4]
    return y


def split_tags(n, fractions, rng):
    """Seeded random split tags with largest-remainder rounding."""
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f <= 0 for f in fractions):
        raise ValueError("need three positive split fractions")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("split fractions must sum to 1")
    raw = np.array([f * n for f in fractions])
    counts = np.floor(raw).astype(int)
    remainder = raw - counts
    for i in np.argsort(-remainder)[: n - counts.sum()]:
        counts[i] += 1
    if (counts == 0).any():
        raise ValueError(f"split of {n} rows by {fractions} leaves a split empty")
    tags = np.repeat(np.array(SPLIT_NAMES, dtype=object), counts)
    return tags[rng.permutation(n)]


def add_noise_snr(y_signal, snr, seed):
    """Add zero-mean Gaussian noise with variance var(signal)/snr."""
    y = np.asarray(y_signal, dtype=np.float64)
    if snr <= 0:
        raise ValueError("snr must be positive")
    var = float(np.var(y))
    if var == 0.0:
        raise ValueError("constant signal: SNR-scaled noise is undefined")
    rng = np.random.default_rng(seed)
    return y + rng.normal(0.0, np.sqrt(var / snr), y.shape)


def _noisy_splits(X, signal, tags, snr, rng):
    """Noise on train and validation rows only, independent draws per split."""
    y = signal.copy()
    for name in ("train", "validation"):
        mask = tags == name
        y[mask] = add_noise_snr(signal[mask], snr, rng.integers(2**32))
    return y


def gen_synthetic_one_node(n=500, p=100, activation="linear", seed=0,
                           snr=1.0, fractions=(0.6, 0.2, 0.2)):
    """Uniform [0,1) inputs; targets from the three-feature single-node signal."""
    if p < 3:
        raise ValueError("need at least 3 features")
    rng = np.random.default_rng(seed)
    X = rng.random((n, p))
    tags = split_tags(n, fractions, rng)
    y = _noisy_splits(X, one_node_signal(X, activation), tags, snr, rng)
    return Dataset(X, y, tags, provenance={
        "generator": "one_node", "activation": activation, "seed": seed,
        "snr": snr, "snr_definition": "variance_ratio",
        "fractions": list(fractions), "n": n, "p": p,
    })


def gen_friedman(n=1000, p=200, include_linear_terms=True, seed=0,
                 snr=0.5, fractions=(0.6, 0.2, 0.2)):
    """Uniform [0,1) inputs; Friedman targets with optional linear terms."""
    if p < 5:
        raise ValueError("need at least 5 features")
    rng = np.random.default_rng(seed)
    X = rng.random((n, p))
    tags = split_tags(n, fractions, rng)
    y = _noisy_splits(X, friedman_signal(X, include_linear_terms), tags, snr, rng)
    return Dataset(X, y, tags, provenance={
        "generator": "friedman", "include_linear_terms": include_linear_terms,
        "seed": seed, "snr": snr, "snr_definition": "variance_ratio",
        "fractions": list(fractions), "n": n, "p": p,
    })


def split_dataset(ds, fractions, seed):
    """Reassign split tags by seeded permutation with largest-remainder counts."""
    rng = np.random.default_rng(seed)
    tags = split_tags(ds.n_rows, fractions, rng)
    prov = dict(ds.provenance)
    prov.update({"split_seed": seed, "fractions": list(fractions)})
    return Dataset(ds.X, ds.y.copy(), tags, provenance=prov)


def load_csv(path, target_column, task="regression", split_column=None):
    """Parse a headed numeric CSV into a Dataset.

    Rows with missing values are rejected (error names the row); non-numeric
    cells are rejected (error names the column).  Classification targets must
    be integers; non-contiguous labels are remapped and the mapping recorded
    in provenance.  If split_column is given, those tags are used; otherwise
    every row is tagged "train".
    """
    if task not in ("regression", "classification"):
        raise ConfigError(f"unknown task {task!r}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file") from None
        if target_column not in header:
            raise ConfigError(f"target column {target_column!r} not in header")
        t_idx = header.index(target_column)
        s_idx = None
        if split_column is not None:
            if split_column not in header:
                raise ConfigError(f"split column {split_column!r} not in header")
            s_idx = header.index(split_column)
        feat_idx = [i for i in range(len(header)) if i not in (t_idx, s_idx)]
        rows, targets, tags = [], [], []
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise FormatError(f"{path}: line {line_no}: wrong field count")
            values = []
            for i in feat_idx + [t_idx]:
                cell = row[i].strip()
                if cell == "":
                    raise FormatError(
                        f"{path}: line {line_no}: missing value in row "
                        f"{line_no - 2}"
                    )
                try:
                    values.append(float(cell))
                except ValueError:
                    raise FormatError(
                        f"{path}: line {line_no}: non-numeric value in "
                        f"column {header[i]!r}"
                    ) from None
            rows.append(values[:-1])
            targets.append(values[-1])
            tags.append(row[s_idx].strip() if s_idx is not None else "train")
    if not rows:
        raise FormatError(f"{path}: no data rows")
    X = np.asarray(rows, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    prov = {"source": str(path), "target_column": target_column, "task": task}
    if task == "classification":
        yi = y.astype(np.intp)
        if not np.array_equal(yi, y):
            raise FormatError("classification targets must be integers")
        labels = np.unique(yi)
        if not np.array_equal(labels, np.arange(labels.size)):
            mapping = {int(lab): i for i, lab in enumerate(labels)}
            yi = np.array([mapping[int(v)] for v in yi], dtype=np.intp)
            prov["class_mapping"] = mapping
        y = yi
    tags = np.asarray(tags, dtype=object)
    if s_idx is not None:
        bad = set(tags) - set(SPLIT_NAMES)
        if bad:
            raise FormatError(f"{path}: unknown split tags {sorted(bad)}")
    return Dataset(X, y, tags, provenance=prov)


def zscore_by_train(ds):
    """Per-column standardization using train-split statistics only."""
    mask = ds.split == "train"
    mean = ds.X[mask].mean(axis=0)
    std = ds.X[mask].std(axis=0)
    std[std == 0] = 1.0
    prov = dict(ds.provenance)
    prov["zscored"] = True
    return Dataset((ds.X - mean) / std, ds.y.copy(), ds.split, provenance=prov)
