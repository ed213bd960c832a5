"""(sigma;T)-regular measures: recognition, extraction, full decomposition.

A 2^-m measure (m = T*ell) is (sigma;T)-regular when, at every block level j,
the mass ratio between each positive-mass level-jT cube and its level-(j-1)T
parent lies in [2^-T*sigma_j / 2, 2^-T*sigma_j] — a uniform Moran-tree
structure.  ``extract_regular_subset`` carves a regular piece of guaranteed
mass out of an arbitrary measure by pigeonholing child-mass ratio classes;
``decompose_regular`` repeats this until almost all mass is assigned.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from .dyadic import (Coords, CubeIndex, DyadicMeasure, DyadicSet,
                     restrict_normalize, _ancestor_coords)

_REL_TOL = 1e-9  # multiplicative tolerance 1 + 1e-9 on the defining inequalities


class DepthMismatch(ValueError):
    pass


@dataclass
class RegularPiece:
    support: DyadicSet
    sigma: List[float]
    T: int
    measure: DyadicMeasure        # the normalized restriction mu_X
    mass: float = 1.0             # mu(X) under the parent measure

    @property
    def ell(self) -> int:
        return len(self.sigma)

    @property
    def d(self) -> int:
        return self.measure.d

    @property
    def m(self) -> int:
        return self.measure.m

    def to_json(self) -> dict:
        return {"sigma": list(self.sigma), "T": self.T, "mass": self.mass,
                "measure": self.measure.to_json()}

    @staticmethod
    def from_json(obj) -> "RegularPiece":
        measure = DyadicMeasure.from_json(obj["measure"])
        return RegularPiece(measure.support(), list(obj["sigma"]), int(obj["T"]),
                            measure, float(obj.get("mass", 1.0)))


def beta(sigma: Sequence[float], j: int) -> float:
    """beta_j(sigma): arithmetic mean of the first j regularity exponents."""
    if not (1 <= j <= len(sigma)):
        raise ValueError("index out of range")
    return float(sum(sigma[:j]) / j)


def _block_ratio_table(mu: DyadicMeasure, T: int, ell: int):
    """For each block level j=1..ell, yield {child coords: (ratio, parent coords)}."""
    levels = [mu.level_masses(j * T) for j in range(ell + 1)]
    tables = []
    for j in range(1, ell + 1):
        parent = levels[j - 1]
        table: Dict[Coords, Tuple[float, Coords]] = {}
        for cell, v in levels[j].items():
            p = _ancestor_coords(cell, T)
            table[cell] = (float(v) / float(parent[p]), p)
        tables.append(table)
    return tables


def is_regular(mu: DyadicMeasure, sigma: Sequence[float], T: int):
    """Check Def.-style regularity: mu(Q) <= 2^-T*sigma_j * mu(parent) <= 2*mu(Q)
    for every positive-mass Q at every block level, within tolerance 1+1e-9.

    Returns ``(ok, violation)`` where violation is ``None`` or ``(j, CubeIndex)``.
    """
    ell = len(sigma)
    if mu.m != T * ell:
        raise DepthMismatch("DepthMismatch")
    tol = 1.0 + _REL_TOL
    for j, table in enumerate(_block_ratio_table(mu, T, ell), start=1):
        w = 2.0 ** (-T * sigma[j - 1])
        for cell, (ratio, _p) in table.items():
            if ratio > w * tol or w > 2.0 * ratio * tol:
                return False, (j, CubeIndex(j * T, cell))
    return True, None


def _ratio_class(ratio: float) -> int:
    """Class index k for the band [2^-(k+1), 2^-k); boundary masses go to the
    smaller exponent (k such that ratio == 2^-(k+1) lands in class k)."""
    q = -math.log2(ratio)
    k = math.ceil(q - 1e-12) - 1
    return max(k, 0)


def extract_regular_subset(mu: DyadicMeasure, T: int, ell: int) -> RegularPiece:
    """Extract X subseteq supp(mu) with mu_X (sigma;T)-regular via top-down
    ratio-class pigeonholing, re-applied on the restricted measure until the
    per-level ratio windows close (fixed point); sigma is then read off from
    the restricted measure itself.
    """
    if mu.m != T * ell:
        raise DepthMismatch("DepthMismatch")
    cells = set(mu.masses.keys())
    while True:
        sub = restrict_normalize(mu, DyadicSet(mu.d, mu.m, cells))
        tables = _block_ratio_table(sub, T, ell)
        # fixed point? every level's ratios already inside a factor-2 window
        sigma: List[float] = []
        ok = True
        for table in tables:
            ratios = [r for r, _ in table.values()]
            rmax, rmin = max(ratios), min(ratios)
            if rmax > 2.0 * rmin * (1.0 + _REL_TOL):
                ok = False
                break
            sigma.append(min(max(-math.log2(rmax) / T, 0.0), float(mu.d)))
        if ok:
            piece_mass = float(sum(mu.masses[c] for c in cells)) / float(mu.total)
            return RegularPiece(DyadicSet(mu.d, mu.m, cells), sigma, T, sub, piece_mass)
        # one top-down pigeonhole pass on the current restricted measure
        survivors = set(sub.masses.keys())
        for j in range(1, ell + 1):
            shift = mu.m - j * T
            # retained mass per class among currently surviving cells
            weights: Dict[int, float] = {}
            classes: Dict[Coords, int] = {}
            table = tables[j - 1]
            for cell in survivors:
                cube = _ancestor_coords(cell, shift)
                k = classes.get(cube)
                if k is None:
                    k = _ratio_class(table[cube][0])
                    classes[cube] = k
                weights[k] = weights.get(k, 0.0) + float(sub.masses[cell])
            best = max(weights.items(), key=lambda kv: (kv[1], -kv[0]))[0]
            survivors = {cell for cell in survivors
                         if classes[_ancestor_coords(cell, shift)] == best}
        if survivors == cells:  # cannot happen once windows fail, but be safe
            raise RuntimeError("pigeonhole made no progress")
        cells = survivors


@dataclass
class RegularDecomposition:
    pieces: List[RegularPiece]
    residual: List[RegularPiece]  # sub-floor pieces kept for diagnostics
    remainder_mass: float
    warnings: List[str] = field(default_factory=list)

    @property
    def union_mass(self) -> float:
        return float(sum(p.mass for p in self.pieces))


def decompose_regular(mu: DyadicMeasure, T: int, ell: int, eps: float) -> RegularDecomposition:
    """Split mu into pairwise-disjoint regular pieces covering mass
    >= 1 - 2^-eps*m, each piece of mass >= 2^-delta*m with
    delta = eps + log2(2dT+2)/T; sub-floor pieces go to ``residual``.
    """
    if mu.m != T * ell:
        raise DepthMismatch("DepthMismatch")
    if eps <= 0:
        raise ValueError("eps must be positive")
    m = mu.m
    stop = 2.0 ** (-eps * m)
    delta = eps + math.log2(2 * mu.d * T + 2) / T
    floor = 2.0 ** (-delta * m)
    remaining = set(mu.masses.keys())
    pieces: List[RegularPiece] = []
    residual: List[RegularPiece] = []
    warnings: List[str] = []
    while remaining:
        rem_mass = float(sum(mu.masses[c] for c in remaining))
        if rem_mass < stop:
            break
        rem_measure = restrict_normalize(mu, DyadicSet(mu.d, mu.m, remaining))
        piece = extract_regular_subset(rem_measure, T, ell)
        piece.mass = piece.mass * rem_mass  # mass under the original mu
        piece.measure = restrict_normalize(mu, piece.support)
        (pieces if piece.mass >= floor else residual).append(piece)
        remaining -= piece.support.cells
    if not pieces:
        warnings.append("MTooSmall")
    rem_mass = float(sum(mu.masses[c] for c in remaining))
    return RegularDecomposition(pieces, residual, rem_mass, warnings)
