"""Shannon entropy, robust entropy, and multiscale image-entropy bounds.

All logarithms are base 2; entropies are in bits.  The robust entropy
H^Delta minimizes entropy over measures dominated by Delta*mu; the minimum of
a concave functional over the capacity polytope {0 <= nu <= Delta*mu,
sum nu = 1} is attained at a vertex, i.e. a greedy capacity fill, which makes
the computation exact.  The multiscale bounds compare the entropy of a smooth
image of a measure against entropies of linear images of its conditional
measures, reporting the measured deficit.
"""
from __future__ import annotations

import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .dyadic import CubeIndex, DyadicMeasure, DyadicSet, conditional, restrict_normalize
from .maps import SingularPoint, SmoothMap
from .multiscale import ScaleDecomposition


class BadDelta(ValueError):
    pass


class NotDominated(ValueError):
    pass


class LinearizationOutOfRange(ValueError):
    pass


# ---------------------------------------------------------------------------
# Plain and conditional entropy
# ---------------------------------------------------------------------------

def _entropy_of(masses) -> float:
    arr = np.asarray([float(v) for v in masses], dtype=float)
    arr = arr[arr > 0]
    return float(-np.sum(arr * np.log2(arr)))


def entropy(mu: DyadicMeasure, j: int) -> float:
    """H(mu, D_j) in bits, 0*log 0 = 0."""
    if not (0 <= j <= mu.m):
        raise ValueError("level out of range")
    return _entropy_of(mu.level_masses(j).values())


def conditional_entropy(mu: DyadicMeasure, fine: int, coarse: int) -> float:
    """H(mu, D_fine | D_coarse) = H_fine - H_coarse; cross-validated against
    the direct sum over coarse cubes of conditional entropies."""
    if not (0 <= coarse <= fine <= mu.m):
        raise ValueError("need coarse <= fine <= m")
    diff = entropy(mu, fine) - entropy(mu, coarse)
    direct = 0.0
    shift = mu.m - coarse
    coarse_masses = mu.level_masses(coarse)
    groups: Dict[tuple, Dict[tuple, float]] = {}
    fshift = mu.m - fine
    for cell, v in mu.masses.items():
        key = tuple(c >> shift for c in cell)
        fkey = tuple(c >> fshift for c in cell)
        g = groups.setdefault(key, {})
        g[fkey] = g.get(fkey, 0.0) + float(v)
    for key, g in sorted(groups.items()):
        tot = float(coarse_masses[key])
        direct += tot * _entropy_of(v / tot for v in g.values())
    if abs(direct - diff) > 1e-9 * max(1.0, abs(diff)):
        raise AssertionError(f"conditional entropy cross-check failed: {diff} vs {direct}")
    return diff


# ---------------------------------------------------------------------------
# Robust entropy
# ---------------------------------------------------------------------------

def _greedy_robust_entropy(masses: np.ndarray, Delta: float) -> float:
    caps = Delta * np.sort(masses)[::-1]
    filled = []
    left = 1.0
    for c in caps:
        take = min(c, left)
        if take <= 0:
            break
        filled.append(take)
        left -= take
        if left <= 1e-15:
            break
    return _entropy_of(filled)


def robust_entropy(mu: DyadicMeasure, j: int, Delta: float) -> float:
    """H^Delta(mu, D_j) = min{H(nu, D_j) : nu <= Delta*mu}, exactly, via the
    greedy vertex (sort masses descending, fill capacities in order)."""
    if Delta < 1:
        raise BadDelta("BadDelta: Delta must be >= 1")
    masses = np.asarray([float(v) for v in mu.level_masses(j).values()])
    return _greedy_robust_entropy(masses, Delta)


def robust_entropy_oracle(mu: DyadicMeasure, j: int, Delta: float) -> float:
    """Exhaustive minimum over all vertices of {0 <= nu <= Delta*mu, sum = 1}:
    every vertex saturates all but at most one coordinate."""
    if Delta < 1:
        raise BadDelta("BadDelta: Delta must be >= 1")
    caps = np.asarray([Delta * float(v) for v in mu.level_masses(j).values()])
    n = len(caps)
    if n > 12:
        raise ValueError("oracle supports at most 12 cells")
    best = math.inf
    for mask in range(1 << n):
        sel = [i for i in range(n) if mask >> i & 1]
        tot = float(caps[[*sel]].sum()) if sel else 0.0
        rem = 1.0 - tot
        if abs(rem) <= 1e-12:
            best = min(best, _entropy_of(caps[[*sel]]))
            continue
        if rem < 0:
            continue
        for jj in range(n):
            if mask >> jj & 1:
                continue
            if caps[jj] >= rem - 1e-12:
                best = min(best, _entropy_of(list(caps[[*sel]]) + [rem]))
    return best


def robust_check(mu: DyadicMeasure, alpha: float, delta: float, m: int) -> bool:
    """(alpha, delta, m)-robustness: every set of mass >= 2^{-delta m} occupies
    at least 2^{alpha m} level-m cells.  Exact via sort-and-accumulate."""
    if alpha <= 0 or delta <= 0:
        raise ValueError("parameters must be positive")
    masses = np.sort(np.asarray([float(v) for v in mu.level_masses(m).values()]))[::-1]
    thresh = 2.0 ** (-delta * m)
    csum = np.cumsum(masses)
    k = int(np.searchsorted(csum, thresh - 1e-15)) + 1
    if csum[-1] < thresh - 1e-15:
        return True          # no admissible set exists; vacuously robust
    return k >= 2.0 ** (alpha * m) - 1e-9


def robust_to_entropy_check(mu: DyadicMeasure, alpha: float, delta: float,
                            m: int, eps: float) -> dict:
    """Check H^{2^{delta m/2}}_m(mu) >= (alpha - eps) m on a robust measure."""
    if not robust_check(mu, alpha, delta, m):
        raise ValueError("precondition failed: measure is not (alpha,delta,m)-robust")
    lhs = robust_entropy(mu, m, 2.0 ** (delta * m / 2))
    rhs = (alpha - eps) * m
    return {"lhs": lhs, "rhs": rhs, "ok": lhs >= rhs - 1e-9}


# ---------------------------------------------------------------------------
# Pushforward histograms
# ---------------------------------------------------------------------------

def pushforward_histogram(points: np.ndarray, weights: np.ndarray, level: int
                          ) -> Dict[tuple, float]:
    """Bin image points into level-`level` dyadic cells of R^k (cell = the one
    containing the point); returns cell-index -> mass."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    idx = np.floor(pts * 2.0 ** level).astype(np.int64)
    out: Dict[tuple, float] = {}
    for row, w in zip(map(tuple, idx), np.asarray(weights, dtype=float)):
        out[row] = out.get(row, 0.0) + float(w)
    return out


def image_entropy(mu: DyadicMeasure, F: SmoothMap, level: int) -> float:
    """H(F mu, D_level): pushforward by cell centers, then Shannon entropy."""
    hist = pushforward_histogram(F(mu.centers()), mu.mass_array(), level)
    return _entropy_of(hist.values())


# ---------------------------------------------------------------------------
# Multiscale bounds
# ---------------------------------------------------------------------------

def _validate(mu: DyadicMeasure, F: SmoothMap, dec: ScaleDecomposition, k: int):
    if F.k != k:
        raise ValueError("map rank does not match target rank")
    centers = mu.centers()
    step = max(1, len(centers) // 256)
    for x in centers[::step]:
        F.row_space(x)       # raises SingularPoint on rank deficiency
    for A, B in dec.intervals:
        # the B_i <= 2 A_i constraint comes from linearization; it is vacuous
        # (and dropped) for linear maps
        if not F.is_linear and B > 2 * A:
            raise LinearizationOutOfRange(
                f"LinearizationOutOfRange: interval ({A},{B}) violates B <= 2A")


def _projected_block_entropies(mu: DyadicMeasure, F: SmoothMap,
                               dec: ScaleDecomposition,
                               entropy_fn) -> List[Tuple[float, float]]:
    """Per (interval, cube): (weight mu(Q), entropy_fn(projected conditional))."""
    T = dec.T
    out: List[Tuple[float, float]] = []
    for (A, B) in dec.intervals:
        a, depth = T * A, T * (B - A)
        for coords, w in sorted(mu.level_masses(a).items()):
            Q = CubeIndex(a, coords)
            cond = conditional(mu, Q)
            V = F.row_space(Q.center())
            pts = cond.centers() @ V.T
            hist = pushforward_histogram(pts, cond.mass_array(), depth)
            out.append((float(w), entropy_fn(hist)))
    return out


def multiscale_entropy_bound(mu: DyadicMeasure, F: SmoothMap,
                             dec: ScaleDecomposition, k: int
                             ) -> Tuple[float, float, float]:
    """Compare H(F mu, D_m) against the sum over scale intervals and cubes of
    mu(Q) * H(P_{V(x_Q)} mu^Q, D_{B_i - A_i}); returns (lhs, rhs, deficit)
    with deficit = rhs - lhs (the theory bounds it by a constant times the
    number of intervals).  The rhs is accumulated by two independent
    summation paths and cross-checked to 1e-9 bits.
    """
    _validate(mu, F, dec, k)
    lhs = image_entropy(mu, F, mu.m)
    terms = _projected_block_entropies(mu, F, dec,
                                       lambda h: _entropy_of(h.values()))
    rhs = math.fsum(w * h for w, h in terms)
    rhs2 = float(np.dot(np.array([w for w, _ in terms]),
                        np.array([h for _, h in terms])))
    if abs(rhs - rhs2) > 1e-9 * max(1.0, abs(rhs)):
        raise AssertionError(f"rhs cross-check failed: {rhs} vs {rhs2}")
    return lhs, rhs, rhs - lhs


def robust_multiscale_bound(nu: DyadicMeasure, mu: DyadicMeasure, Delta: float,
                            F: SmoothMap, dec: ScaleDecomposition, k: int
                            ) -> Tuple[float, float, float]:
    """Robust variant: nu <= Delta*mu; the rhs weights are nu(Q) and each block
    entropy is the (m*Delta)-robust entropy of the projected conditional."""
    if Delta < 1:
        raise BadDelta("BadDelta: Delta must be >= 1")
    if nu.d != mu.d or nu.m != mu.m:
        raise ValueError("nu/mu shape mismatch")
    for cell, v in nu.masses.items():
        if float(v) > Delta * float(mu.masses.get(cell, 0.0)) * (1 + 1e-9):
            raise NotDominated(f"NotDominated: cell {cell}")
    _validate(mu, F, dec, k)
    m = mu.m
    lhs = image_entropy(nu, F, m)
    T = dec.T
    terms: List[Tuple[float, float]] = []
    for (A, B) in dec.intervals:
        a, depth = T * A, T * (B - A)
        nu_w = nu.level_masses(a)
        for coords, w in sorted(nu_w.items()):
            Q = CubeIndex(a, coords)
            cond = conditional(mu, Q)
            V = F.row_space(Q.center())
            hist = pushforward_histogram(cond.centers() @ V.T,
                                         cond.mass_array(), depth)
            h = _greedy_robust_entropy(np.asarray(list(hist.values())), m * Delta)
            terms.append((float(w), h))
    rhs = math.fsum(w * h for w, h in terms)
    return lhs, rhs, rhs - lhs


def linearization_defect(mu: DyadicMeasure, F: SmoothMap, Q: CubeIndex,
                         x: Sequence[float], target_level: int) -> float:
    """|H(F mu_Q, D_B) - H(P_{V(x)} mu_Q, D_B)| at B = target_level; the
    Taylor-linearization regime requires target_level <= 2 * Q.level."""
    if target_level > 2 * Q.level and not F.is_linear:
        raise LinearizationOutOfRange("LinearizationOutOfRange")
    shift = mu.m - Q.level
    cells = [c for c in mu.masses if tuple(ci >> shift for ci in c) == Q.coords]
    muQ = restrict_normalize(mu, DyadicSet(mu.d, mu.m, cells))
    centers, w = muQ.centers(), muQ.mass_array()
    h_img = _entropy_of(pushforward_histogram(F(centers), w, target_level).values())
    V = F.row_space(np.asarray(x, dtype=float))
    h_lin = _entropy_of(pushforward_histogram(centers @ V.T, w, target_level).values())
    return abs(h_img - h_lin)
