import itertools

import numpy as np
import pytest

from frostlab.dyadic import DyadicMeasure, DyadicSet
from frostlab.regular import RegularPiece


def regular_cantor(d, T, ell, sigma, seed=0):
    """Exactly (sigma;T)-regular measure: each block-level cube keeps
    2^(T*sigma_j) children, uniformly weighted."""
    rng = np.random.default_rng(seed)
    offsets = list(itertools.product(range(1 << T), repeat=d))
    cells = [tuple(0 for _ in range(d))]
    for s in sigma:
        n_child = round(2.0 ** (T * s))
        assert abs(n_child - 2.0 ** (T * s)) < 1e-9, "sigma must give integer child counts"
        new = []
        for cell in cells:
            picks = rng.choice(len(offsets), size=n_child, replace=False)
            for p in picks:
                new.append(tuple((c << T) + o for c, o in zip(cell, offsets[p])))
        cells = new
    m = T * ell
    w = 1.0 / len(cells)
    mu = DyadicMeasure(d, m, {c: w for c in cells})
    return RegularPiece(mu.support(), list(sigma), T, mu)


def random_measure(d, m, seed, max_cells=120):
    """Random sparse 2^-m measure with positive random masses."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, max_cells))
    cells = {tuple(int(v) for v in rng.integers(0, 1 << m, size=d))
             for _ in range(n)}
    w = rng.uniform(0.2, 1.0, size=len(cells))
    w /= w.sum()
    return DyadicMeasure(d, m, dict(zip(sorted(cells), w)))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
