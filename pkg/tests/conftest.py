import numpy as np
import pytest

from lockout import Dataset


def make_dataset(X, y, split=None):
    n = X.shape[0]
    if split is None:
        split = np.array(["train"] * n, dtype=object)
    return Dataset(np.asarray(X, float), np.asarray(y), np.asarray(split))


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def random_instance(rng, n, kind="l1", beta=0.5, zero_frac=0.3):
    """Random linearized step instance matching one penalty kind."""
    w = np.where(rng.random(n) < zero_frac, 0.0, rng.normal(size=n))
    g = rng.normal(size=n)
    s = np.abs(rng.normal(size=n)) * 0.3
    absw = np.abs(w)
    if kind == "l1":
        p = np.ones(n)
    elif kind == "l2":
        p = 2.0 * absw
    else:
        p = (1.0 - beta) / ((1.0 - beta) * absw + beta)
    slack = rng.normal() * 0.2
    return w, g, p, s, slack
