"""Exact representation and queries for 2^-m measures and 2^-m sets on [0,1)^d.

A 2^-m measure is a probability measure that is constant on each half-open
dyadic cell of side 2^-m; it is stored as a sparse map from level-m cell
indices to masses.  All geometric queries (balls, slabs) use the cell-CENTER
convention: a cell belongs to a region iff its center does.  This makes every
count deterministic and order-free; the O(1) cube-vs-ball covering slack in
the inequalities we verify absorbs the difference.

Masses are 64-bit floats by default; pass ``exact=True`` to keep
``fractions.Fraction`` masses for oracle tests.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, List, Mapping, Sequence, Tuple

import numpy as np

Coords = Tuple[int, ...]


class EmptySupport(ValueError):
    pass


class ZeroMassCube(ValueError):
    pass


class ZeroMassSet(ValueError):
    pass


class BadNormal(ValueError):
    pass


@dataclass(frozen=True, order=True)
class CubeIndex:
    """Index of a half-open dyadic cube: level j, coords in [0, 2^j)^d."""

    level: int
    coords: Coords

    def __post_init__(self):
        if self.level < 0:
            raise ValueError("level must be non-negative")
        n = 1 << self.level
        for c in self.coords:
            if not (0 <= c < n):
                raise ValueError(f"coord {c} out of range at level {self.level}")

    @property
    def d(self) -> int:
        return len(self.coords)

    def parent(self) -> "CubeIndex":
        if self.level == 0:
            raise ValueError("root cube has no parent")
        return CubeIndex(self.level - 1, tuple(c >> 1 for c in self.coords))

    def ancestor(self, level: int) -> "CubeIndex":
        if not (0 <= level <= self.level):
            raise ValueError("bad ancestor level")
        shift = self.level - level
        return CubeIndex(level, tuple(c >> shift for c in self.coords))

    def center(self) -> Tuple[float, ...]:
        side = 2.0 ** (-self.level)
        return tuple((c + 0.5) * side for c in self.coords)

    def low_corner(self) -> Tuple[float, ...]:
        side = 2.0 ** (-self.level)
        return tuple(c * side for c in self.coords)

    def contains(self, other: "CubeIndex") -> bool:
        return other.level >= self.level and other.ancestor(self.level) == self


def _ancestor_coords(coords: Coords, shift: int) -> Coords:
    return tuple(c >> shift for c in coords)


class DyadicSet:
    """A 2^-m set: a union of distinct level-m cells of [0,1)^d."""

    def __init__(self, d: int, m: int, cells: Iterable[Coords]):
        self.d = int(d)
        self.m = int(m)
        self.cells = frozenset(tuple(int(c) for c in cell) for cell in cells)
        n = 1 << self.m
        for cell in self.cells:
            if len(cell) != self.d:
                raise ValueError("cell dimension mismatch")
            if any(not (0 <= c < n) for c in cell):
                raise ValueError("cell out of range")

    def __len__(self) -> int:
        return len(self.cells)

    def __contains__(self, cell: Coords) -> bool:
        return tuple(cell) in self.cells

    def sorted_cells(self) -> List[Coords]:
        return sorted(self.cells)

    def centers(self) -> np.ndarray:
        idx = np.array(self.sorted_cells(), dtype=np.int64).reshape(len(self), self.d)
        return (idx + 0.5) * 2.0 ** (-self.m)

    def to_json(self) -> dict:
        return {"d": self.d, "m": self.m, "cells": [{"idx": list(c)} for c in self.sorted_cells()]}

    @staticmethod
    def from_json(obj: Mapping) -> "DyadicSet":
        return DyadicSet(obj["d"], obj["m"], [tuple(c["idx"]) for c in obj["cells"]])


class DyadicMeasure:
    """A 2^-m probability measure on [0,1)^d, sparse over its dyadic support.

    Parameters
    ----------
    d, m : int
        Ambient dimension and depth.
    masses : mapping coords -> mass
        Strictly positive masses on level-m cells; zero entries are dropped.
    exact : bool
        Keep masses as ``Fraction`` (no float conversion) when True.
    normalized : bool
        When True (default) the total mass must be 1 within 1e-12.
    """

    def __init__(self, d: int, m: int, masses: Mapping[Coords, object],
                 exact: bool = False, normalized: bool = True):
        self.d = int(d)
        self.m = int(m)
        self.exact = bool(exact)
        conv = (lambda v: Fraction(v)) if exact else float
        items: Dict[Coords, object] = {}
        n = 1 << self.m
        for cell, v in masses.items():
            cell = tuple(int(c) for c in cell)
            if len(cell) != self.d:
                raise ValueError("cell dimension mismatch")
            if any(not (0 <= c < n) for c in cell):
                raise ValueError("cell out of range")
            v = conv(v)
            if v < 0:
                raise ValueError("negative mass")
            if v > 0:
                items[cell] = v
        if not items:
            raise EmptySupport("EmptySupport: measure has no positive-mass cell")
        self.masses: Dict[Coords, object] = dict(sorted(items.items()))
        total = sum(self.masses.values())
        if normalized and abs(float(total) - 1.0) > 1e-12:
            raise ValueError(f"total mass {float(total)} != 1")
        self.total = total
        self._cells_arr: np.ndarray | None = None
        self._mass_arr: np.ndarray | None = None

    # -- array views (cached; sorted cell order for reproducible reductions) --
    def cells_array(self) -> np.ndarray:
        if self._cells_arr is None:
            self._cells_arr = np.array(list(self.masses.keys()), dtype=np.int64).reshape(
                len(self.masses), self.d)
        return self._cells_arr

    def mass_array(self) -> np.ndarray:
        if self._mass_arr is None:
            self._mass_arr = np.array([float(v) for v in self.masses.values()])
        return self._mass_arr

    def centers(self) -> np.ndarray:
        return (self.cells_array() + 0.5) * 2.0 ** (-self.m)

    def support(self) -> DyadicSet:
        return DyadicSet(self.d, self.m, self.masses.keys())

    def __len__(self) -> int:
        return len(self.masses)

    # -- cube masses ----------------------------------------------------------
    def cube_mass(self, Q: CubeIndex):
        """mu(Q) for a cube at any level <= m (sum over descendant cells)."""
        if Q.level > self.m:
            raise ValueError("cube finer than depth m")
        shift = self.m - Q.level
        zero = Fraction(0) if self.exact else 0.0
        return sum((v for cell, v in self.masses.items()
                    if _ancestor_coords(cell, shift) == Q.coords), zero)

    def level_masses(self, j: int) -> Dict[Coords, object]:
        """Map from positive-mass level-j cube coords to masses."""
        if not (0 <= j <= self.m):
            raise ValueError("level out of range")
        shift = self.m - j
        out: Dict[Coords, object] = {}
        for cell, v in self.masses.items():
            key = _ancestor_coords(cell, shift)
            out[key] = out.get(key, Fraction(0) if self.exact else 0.0) + v
        return out

    # -- serialization ---------------------------------------------------------
    def to_json(self) -> dict:
        return {"d": self.d, "m": self.m,
                "cells": [{"idx": list(c), "mass": float(v)} for c, v in self.masses.items()]}

    @staticmethod
    def from_json(obj: Mapping, exact: bool = False) -> "DyadicMeasure":
        masses = {tuple(c["idx"]): c["mass"] for c in obj["cells"]}
        return DyadicMeasure(obj["d"], obj["m"], masses, exact=exact)


def load_measure_or_set(path: str):
    with open(path) as fh:
        obj = json.load(fh)
    if obj["cells"] and "mass" in obj["cells"][0]:
        return DyadicMeasure.from_json(obj)
    return DyadicSet.from_json(obj)


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def uniform_on(dset: DyadicSet, exact: bool = False) -> DyadicMeasure:
    """Normalized indicator measure 1_X/|X| on a 2^-m set X."""
    if len(dset) == 0:
        raise EmptySupport("EmptySupport")
    if exact:
        w = Fraction(1, len(dset))
    else:
        w = 1.0 / len(dset)
    return DyadicMeasure(dset.d, dset.m, {c: w for c in dset.cells}, exact=exact)


def conditional(mu: DyadicMeasure, Q: CubeIndex) -> DyadicMeasure:
    """The magnified renormalized restriction mu^Q at depth m - Q.level."""
    if Q.level > mu.m:
        raise ValueError("cube finer than measure depth")
    shift = mu.m - Q.level
    sub = {cell: v for cell, v in mu.masses.items()
           if _ancestor_coords(cell, shift) == Q.coords}
    if not sub:
        raise ZeroMassCube("ZeroMassCube")
    tot = sum(sub.values())
    base = tuple(c << shift for c in Q.coords)
    out = {tuple(c - b for c, b in zip(cell, base)): v / tot for cell, v in sub.items()}
    return DyadicMeasure(mu.d, shift, out, exact=mu.exact)


def restrict_normalize(mu: DyadicMeasure, A: DyadicSet) -> DyadicMeasure:
    """The normalized restriction mu_A = mu(A)^{-1} mu|_A (same depth)."""
    if A.d != mu.d or A.m != mu.m:
        raise ValueError("set/measure shape mismatch")
    sub = {cell: v for cell, v in mu.masses.items() if cell in A.cells}
    if not sub:
        raise ZeroMassSet("ZeroMassSet")
    tot = sum(sub.values())
    return DyadicMeasure(mu.d, mu.m, {c: v / tot for c, v in sub.items()}, exact=mu.exact)


def count_cubes(x, j: int) -> int:
    """N(X, j): number of level-j dyadic cubes hitting the support."""
    if isinstance(x, DyadicMeasure):
        cells = x.masses.keys()
        m = x.m
    else:
        cells = x.cells
        m = x.m
    if not (0 <= j <= m):
        raise ValueError("level out of range")
    shift = m - j
    return len({_ancestor_coords(c, shift) for c in cells})


def ball_mass(mu: DyadicMeasure, x: Sequence[float], r: float) -> float:
    """Mass of cells whose center lies within Euclidean distance r of x."""
    if r <= 0:
        return 0.0
    diff = mu.centers() - np.asarray(x, dtype=float)
    inside = np.einsum("ij,ij->i", diff, diff) <= r * r
    return float(mu.mass_array()[inside].sum())


def slab_mass(mu: DyadicMeasure, normal: Sequence[float], offset: float, r: float) -> float:
    """Mass of cells whose center is within distance r of the hyperplane
    {y : <normal, y> = offset}."""
    n = np.asarray(normal, dtype=float)
    if abs(np.linalg.norm(n) - 1.0) > 1e-9:
        raise BadNormal("BadNormal")
    dist = np.abs(mu.centers() @ n - offset)
    return float(mu.mass_array()[dist <= r].sum())


def all_ball_masses(mu: DyadicMeasure, xs: np.ndarray, radii: Sequence[float]) -> np.ndarray:
    """Vectorized ball_mass over many centers and radii.

    Returns array of shape (len(xs), len(radii)); used by the multiscale
    verification sweeps where per-call overhead dominates.
    """
    centers = mu.centers()
    w = mu.mass_array()
    out = np.empty((len(xs), len(radii)))
    rr = np.asarray(radii, dtype=float)
    for i, x in enumerate(np.asarray(xs, dtype=float)):
        diff = centers - x
        d2 = np.einsum("ij,ij->i", diff, diff)
        order = np.argsort(d2)
        csum = np.cumsum(w[order])
        pos = np.searchsorted(np.sqrt(d2[order]), rr, side="right")
        out[i] = np.where(pos > 0, csum[np.maximum(pos - 1, 0)], 0.0)
    return out
